#include "ptsd/io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <string>

namespace ptsd {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian");

namespace {

constexpr char kCheckpointMagic[8] = {'p', 't', 's', 'd', 'c', 'k', 'p', 't'};
constexpr char kSamplesMagic[8] = {'p', 't', 's', 'd', 's', 'm', 'p', 'l'};
constexpr std::uint32_t kFormatVersion = 1;

[[noreturn]] void fail(const std::filesystem::path& path,
                       const std::string& what) {
  throw std::runtime_error(path.string() + ": " + what);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  return in;
}

template <typename T>
void put(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) fail(path, "truncated file");
  return value;
}

void put_doubles(std::ofstream& out, const double* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(n * sizeof(double)));
}

void get_doubles(std::ifstream& in, const std::filesystem::path& path,
                 double* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) fail(path, "truncated file");
}

void expect_magic(std::ifstream& in, const std::filesystem::path& path,
                  const char (&magic)[8]) {
  char found[8];
  in.read(found, 8);
  if (!in || !std::equal(found, found + 8, magic))
    fail(path, "not a recognized file (bad magic)");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kFormatVersion)
    fail(path, "unsupported format version " + std::to_string(version));
}

}  // namespace

void save_checkpoint(const Denoiser& model, const std::filesystem::path& path) {
  auto out = open_out(path);
  out.write(kCheckpointMagic, 8);
  put(out, kFormatVersion);
  put(out, std::int32_t(model.config().dim));
  put(out, std::int32_t(model.config().width));
  put(out, std::int32_t(model.config().hidden_layers));
  put(out, model.sigma_data());
  put(out, std::int32_t(model.linear_layers()));
  for (int l = 0; l < model.linear_layers(); ++l) {
    const Eigen::MatrixXd& w = model.weight(l);
    put(out, std::int32_t(w.rows()));
    put(out, std::int32_t(w.cols()));
    put_doubles(out, w.data(), std::size_t(w.size()));
    put_doubles(out, model.bias(l).data(), std::size_t(w.rows()));
  }
  if (!out) fail(path, "write failed");
}

Denoiser load_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path);
  expect_magic(in, path, kCheckpointMagic);
  MlpConfig config;
  config.dim = get<std::int32_t>(in, path);
  config.width = get<std::int32_t>(in, path);
  config.hidden_layers = get<std::int32_t>(in, path);
  const double sigma_data = get<double>(in, path);
  const auto layers = get<std::int32_t>(in, path);

  Rng scratch(0);
  Denoiser model(config, scratch);
  if (layers != model.linear_layers())
    fail(path, "layer count does not match the stored architecture");
  for (int l = 0; l < layers; ++l) {
    const auto rows = get<std::int32_t>(in, path);
    const auto cols = get<std::int32_t>(in, path);
    Eigen::MatrixXd& w = model.weight(l);
    if (rows != w.rows() || cols != w.cols())
      fail(path, "layer shape does not match the stored architecture");
    get_doubles(in, path, w.data(), std::size_t(w.size()));
    get_doubles(in, path, model.bias(l).data(), std::size_t(rows));
  }
  model.set_sigma_data(sigma_data);
  return model;
}

void save_samples(const Eigen::MatrixXd& samples,
                  const std::filesystem::path& path) {
  auto out = open_out(path);
  out.write(kSamplesMagic, 8);
  put(out, kFormatVersion);
  put(out, std::int32_t(samples.rows()));
  put(out, std::int64_t(samples.cols()));
  put_doubles(out, samples.data(), std::size_t(samples.size()));
  if (!out) fail(path, "write failed");
}

Eigen::MatrixXd load_samples(const std::filesystem::path& path) {
  auto in = open_in(path);
  expect_magic(in, path, kSamplesMagic);
  const auto dim = get<std::int32_t>(in, path);
  const auto count = get<std::int64_t>(in, path);
  if (dim < 0 || count < 0) fail(path, "negative dimensions");
  Eigen::MatrixXd samples(dim, count);
  get_doubles(in, path, samples.data(), std::size_t(samples.size()));
  return samples;
}

void save_samples_csv(const Eigen::MatrixXd& samples,
                      const std::filesystem::path& path) {
  auto out = open_out(path);
  char buffer[40];
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
      std::snprintf(buffer, sizeof buffer, "%.17g", samples(i, j));
      if (i) out.put(',');
      out << buffer;
    }
    out.put('\n');
  }
  if (!out) fail(path, "write failed");
}

Eigen::MatrixXd load_samples_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    const char* p = line.c_str();
    while (true) {
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) fail(path, "malformed number in row " +
                                   std::to_string(rows.size() + 1));
      row.push_back(v);
      p = end;
      while (*p == ' ') ++p;
      if (*p == ',') {
        ++p;
      } else if (*p == '\0' || *p == '\r') {
        break;
      } else {
        fail(path, "unexpected character in row " +
                       std::to_string(rows.size() + 1));
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      fail(path, "inconsistent column count");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd samples(Eigen::Index(rows.front().size()),
                          Eigen::Index(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t i = 0; i < rows[j].size(); ++i)
      samples(Eigen::Index(i), Eigen::Index(j)) = rows[j][i];
  return samples;
}

void write_samples(const Eigen::MatrixXd& samples,
                   const std::filesystem::path& path) {
  if (path.extension() == ".csv")
    save_samples_csv(samples, path);
  else
    save_samples(samples, path);
}

Eigen::MatrixXd read_samples(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? load_samples_csv(path)
                                    : load_samples(path);
}

void write_json(const nlohmann::json& value,
                const std::filesystem::path& path) {
  auto out = open_out(path);
  out << value.dump(2) << '\n';
  if (!out) fail(path, "write failed");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(path, e.what());
  }
}

}  // namespace ptsd
