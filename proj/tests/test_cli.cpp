#include <fstream>
#include <iostream>
#include <sstream>

#include "doctest.h"
#include "seq2gmm/cli.hpp"
#include "temp_dir.hpp"

using namespace seq2gmm;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

/// Captures std::cerr for the lifetime of the object.
class CaptureStderr {
 public:
  CaptureStderr() : old_(std::cerr.rdbuf(buffer_.rdbuf())) {}
  ~CaptureStderr() { std::cerr.rdbuf(old_); }
  std::string text() const { return buffer_.str(); }

 private:
  std::ostringstream buffer_;
  std::streambuf* old_;
};

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "seq2gmm");
  return cli_main(args);
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CaptureStderr err;
  CHECK(run({"train", "--no-such-flag", "3"}) == 1);
  CHECK(run({}) == 1);
  CHECK(run({"fly"}) == 1);
  CHECK(run({"synth", "--train.lambda", "heavy", "--out", "x.tsv"}) == 1);
  CHECK(run({"train"}) == 1);
  CHECK_FALSE(err.text().empty());
}

TEST_CASE("missing model exits 2 naming the path") {
  TempDir dir;
  const auto missing = (dir.path() / "absent.json").string();
  CaptureStderr err;
  CHECK(run({"eval", "--model", missing, "--input", missing}) == 2);
  CHECK(err.text().find(missing) != std::string::npos);
}

TEST_CASE("synth, segment, train and score") {
  TempDir dir;
  const auto config = dir.path() / "c.ini";
  std::ofstream(config) << "[data]\nperiod = 30\nnum_normal = 8\nnum_anomalous = 3\nmax_shift = 4\n"
                           "anomaly_offset = 10\nanomaly_length = 5\n"
                           "[model]\nK = 2\nhidden = 3\nestimator_width = 4\nnum_segments = 3\n"
                           "[train]\nrounds = 1\npretrain_epochs = 2\n";
  const auto data = (dir.path() / "d.tsv").string();
  const std::string cfg = config.string();
  CaptureStderr err;

  REQUIRE(run({"synth", "--config", cfg, "--out", data}) == 0);
  CHECK(count_lines(data) == 11);

  const auto segs = dir.path() / "segs.jsonl";
  REQUIRE(run({"segment", "--config", cfg, "--input", data, "--out", segs.string()}) == 0);
  CHECK(count_lines(segs) == 11);

  const auto m1 = dir.path() / "m1.json";
  const auto m2 = dir.path() / "m2.json";
  REQUIRE(run({"train", "--config", cfg, "--seed", "7", "--input", data, "--out", m1.string()}) == 0);
  REQUIRE(run({"train", "--config", cfg, "--seed", "7", "--input", data, "--out", m2.string()}) == 0);
  CHECK(read_file(m1) == read_file(m2));
  CHECK(std::filesystem::exists(dir.path() / "m1.json.meta.json"));

  const auto m3 = dir.path() / "m3.json";
  REQUIRE(run({"train", "--config", cfg, "--seed", "8", "--input", data, "--out", m3.string()}) == 0);
  CHECK(read_file(m1) != read_file(m3));

  const auto scores = dir.path() / "scores.jsonl";
  REQUIRE(run({"score", "--input", data, "--model", m1.string(), "--out", scores.string()}) == 0);
  CHECK(count_lines(scores) == 11);

  const auto csv = dir.path() / "scores.csv";
  REQUIRE(run({"score", "--input", data, "--model", m1.string(), "--out", csv.string()}) == 0);
  CHECK(count_lines(csv) == 12);

  const auto latent = dir.path() / "latent.csv";
  REQUIRE(run({"export-latent", "--input", data, "--model", m1.string(), "--out", latent.string()}) == 0);
  CHECK(count_lines(latent) == 34);
}
