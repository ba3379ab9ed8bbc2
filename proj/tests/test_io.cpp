#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "ptsd/diffusion.hpp"
#include "ptsd/io.hpp"
#include "ptsd/targets.hpp"

using namespace ptsd;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() /
                   ("ptsd_io_" + std::to_string(std::rand()));
  fs::create_directories(dir);
  return dir;
}

Denoiser trained_toy_model(std::uint64_t seed) {
  Rng rng(seed);
  Denoiser model(MlpConfig{3, 16, 2}, rng);
  const Eigen::MatrixXd data = 1.7 * rng.normal_mat(3, 256);
  TrainConfig config;
  config.iterations = 40;
  config.batch = 64;
  train_dsm(model, data, config, rng);
  return model;
}

bool same_parameters(const Denoiser& a, const Denoiser& b) {
  if (a.config() != b.config()) return false;
  if (a.sigma_data() != b.sigma_data()) return false;
  for (int l = 0; l < a.linear_layers(); ++l) {
    if (!(a.weight(l) == b.weight(l))) return false;
    if (!(a.bias(l) == b.bias(l))) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("checkpoint round-trips a trained model bit for bit") {
  const auto dir = temp_dir();
  const Denoiser model = trained_toy_model(7);
  const auto path = dir / "model.ckpt";
  save_checkpoint(model, path);
  const Denoiser loaded = load_checkpoint(path);

  CHECK(same_parameters(model, loaded));

  Rng rng(1);
  const Eigen::MatrixXd x = rng.normal_mat(3, 5);
  CHECK(model.denoise(x, 0.7) == loaded.denoise(x, 0.7));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint loading rejects damaged files") {
  const auto dir = temp_dir();
  const auto path = dir / "model.ckpt";
  save_checkpoint(trained_toy_model(3), path);

  SUBCASE("bad magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("bogus!!!", 8);
    f.close();
    CHECK_THROWS_AS((void)load_checkpoint(path), std::runtime_error);
  }
  SUBCASE("truncated") {
    const auto size = fs::file_size(path);
    fs::resize_file(path, size / 2);
    CHECK_THROWS_AS((void)load_checkpoint(path), std::runtime_error);
  }
  SUBCASE("missing") {
    CHECK_THROWS_AS((void)load_checkpoint(dir / "absent.ckpt"),
                    std::runtime_error);
  }
  fs::remove_all(dir);
}

TEST_CASE("binary samples round-trip bit for bit") {
  const auto dir = temp_dir();
  Rng rng(11);
  Eigen::MatrixXd samples = rng.normal_mat(4, 37);
  samples(2, 5) = std::numeric_limits<double>::quiet_NaN();
  samples(0, 0) = -0.0;

  const auto path = dir / "draws.bin";
  save_samples(samples, path);
  const Eigen::MatrixXd loaded = load_samples(path);
  REQUIRE(loaded.rows() == samples.rows());
  REQUIRE(loaded.cols() == samples.cols());
  for (int j = 0; j < samples.cols(); ++j)
    for (int i = 0; i < samples.rows(); ++i) {
      const bool same_bits =
          std::memcmp(&loaded(i, j), &samples(i, j), sizeof(double)) == 0;
      CHECK(same_bits);
    }
  fs::remove_all(dir);
}

TEST_CASE("csv samples survive the decimal round trip exactly") {
  const auto dir = temp_dir();
  Rng rng(13);
  Eigen::MatrixXd samples = rng.normal_mat(3, 20);
  samples(0, 1) = 1.0 / 3.0;
  samples(1, 2) = 1e-300;
  samples(2, 3) = -123456789.123456789;

  const auto path = dir / "draws.csv";
  save_samples_csv(samples, path);
  const Eigen::MatrixXd loaded = load_samples_csv(path);
  REQUIRE(loaded.rows() == samples.rows());
  REQUIRE(loaded.cols() == samples.cols());
  CHECK(loaded == samples);
  fs::remove_all(dir);
}

TEST_CASE("csv loader rejects ragged and malformed input") {
  const auto dir = temp_dir();
  const auto path = dir / "bad.csv";
  {
    std::ofstream f(path);
    f << "1.0,2.0\n3.0\n";
  }
  CHECK_THROWS_AS((void)load_samples_csv(path), std::runtime_error);
  {
    std::ofstream f(path);
    f << "1.0,oops\n";
  }
  CHECK_THROWS_AS((void)load_samples_csv(path), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("extension dispatch picks text or binary") {
  const auto dir = temp_dir();
  Rng rng(17);
  const Eigen::MatrixXd samples = rng.normal_mat(2, 9);

  write_samples(samples, dir / "a.csv");
  write_samples(samples, dir / "a.bin");
  CHECK(read_samples(dir / "a.csv") == samples);
  CHECK(read_samples(dir / "a.bin") == samples);

  // The csv file is human-readable text, the binary one is not.
  std::ifstream f(dir / "a.csv");
  std::string first;
  std::getline(f, first);
  CHECK(first.find(',') != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("json files round-trip") {
  const auto dir = temp_dir();
  const nlohmann::json value = {{"alpha", 0.1234567890123456789},
                                {"name", "run"},
                                {"list", {1, 2, 3}},
                                {"nested", {{"flag", true}}}};
  write_json(value, dir / "v.json");
  CHECK(read_json(dir / "v.json") == value);

  {
    std::ofstream f(dir / "broken.json");
    f << "{ not json";
  }
  CHECK_THROWS_AS((void)read_json(dir / "broken.json"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("shipped target parameter files match the implementations") {
  const fs::path root = PTSD_SOURCE_DIR;
  const auto check_file = [&](const fs::path& file,
                              const nlohmann::json& expected) {
    CAPTURE(file.string());
    REQUIRE(fs::exists(file));
    CHECK(read_json(file) == expected);
    // Byte-level: the shipped file is exactly the canonical dump.
    std::ifstream f(file, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(f)),
                      std::istreambuf_iterator<char>());
    CHECK(bytes == expected.dump(2) + "\n");
  };

  check_file(root / "data/targets/mog40.json", MogTarget().params());
  check_file(root / "data/targets/manywell32.json",
             ManyWellTarget(16).params());
  check_file(root / "data/targets/lj13.json",
             LennardJonesTarget(13).params());
}

TEST_SUITE_END();
