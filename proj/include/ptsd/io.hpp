#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <filesystem>

#include "ptsd/network.hpp"

namespace ptsd {

// Binary model checkpoint: magic, format version, architecture, sigma_data,
// then each layer's dimensions and little-endian f64 parameters. Loading a
// saved model reproduces it bit for bit.
void save_checkpoint(const Denoiser& model, const std::filesystem::path& path);
Denoiser load_checkpoint(const std::filesystem::path& path);

// Binary sample matrix, one sample per column, little-endian f64
// column-major payload behind a self-describing header. Bit-exact.
void save_samples(const Eigen::MatrixXd& samples,
                  const std::filesystem::path& path);
Eigen::MatrixXd load_samples(const std::filesystem::path& path);

// Plain numeric CSV, one sample per row, 17 significant digits so every
// double survives the decimal round trip.
void save_samples_csv(const Eigen::MatrixXd& samples,
                      const std::filesystem::path& path);
Eigen::MatrixXd load_samples_csv(const std::filesystem::path& path);

// Extension dispatch: ".csv" is text, everything else the binary format.
void write_samples(const Eigen::MatrixXd& samples,
                   const std::filesystem::path& path);
Eigen::MatrixXd read_samples(const std::filesystem::path& path);

void write_json(const nlohmann::json& value, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace ptsd
