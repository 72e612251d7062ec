#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kCli = FEDVALUE_CLI_PATH;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("fedvalue-cli-" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

json read_jsonl(const fs::path& file) {
  std::ifstream in(file);
  REQUIRE(in.good());
  std::string line;
  REQUIRE(std::getline(in, line));
  return json::parse(line);
}

void write_demo_csv(const fs::path& file, int rows = 60) {
  std::ofstream out(file);
  out << "id,f1,f2,f3,f4,f5,f6,y\n";
  for (int r = 0; r < rows; ++r) {
    // deterministic, mildly label-correlated features
    int y = r % 3;
    out << "s" << r;
    for (int c = 1; c <= 6; ++c) {
      out << "," << ((r * c * 7 + c * 13) % 10 + (c % 2 ? y : 0));
    }
    out << "," << y << "\n";
  }
}

}  // namespace

TEST_CASE("valuate on a CSV reports additive per-party values") {
  TempDir dir;
  auto csv = dir.path / "demo.csv";
  write_demo_csv(csv);
  auto out = dir.path / "report.jsonl";
  int rc = run("valuate --input " + csv.string() +
               " --label y --id-column id --bins 4 --parties 2"
               " --features-per-party 2 --seed 5 --format jsonl --out " +
               out.string());
  CHECK(rc == 0);
  auto record = read_jsonl(out);
  CHECK(record["kind"] == "valuation");
  CHECK(record["phi"].size() == 2);
  double sum = 0.0;
  for (const auto& [id, v] : record["phi"].items()) sum += v.get<double>();
  CHECK(std::abs(sum - record["total_cmi"].get<double>()) <= 1e-9);
}

TEST_CASE("federated and centralized runs emit identical phi fields") {
  TempDir dir;
  auto cen = dir.path / "cen.jsonl";
  auto fed = dir.path / "fed.jsonl";
  const std::string common =
      "valuate --parties 3 --n-samples 128 --seed 17 --format jsonl ";
  CHECK(run(common + "--mode centralized --out " + cen.string()) == 0);
  CHECK(run(common + "--mode federated --out " + fed.string()) == 0);
  auto cen_record = read_jsonl(cen);
  auto fed_record = read_jsonl(fed);
  CHECK(cen_record["phi"].dump() == fed_record["phi"].dump());
  CHECK(cen_record["total_cmi"] == fed_record["total_cmi"]);
  CHECK(fed_record["psi_rounds"].get<std::uint64_t>() > 0);
  CHECK(cen_record["psi_rounds"].get<std::uint64_t>() == 0);
}

TEST_CASE("identical configs produce identical reports") {
  TempDir dir;
  auto a = dir.path / "a.jsonl";
  auto b = dir.path / "b.jsonl";
  const std::string common =
      "valuate --parties 2 --n-samples 96 --seed 23 --method sampled "
      "--samples 50 --format jsonl --out ";
  CHECK(run(common + a.string()) == 0);
  CHECK(run(common + b.string()) == 0);
  auto ra = read_jsonl(a);
  auto rb = read_jsonl(b);
  ra.erase("wall_seconds");
  rb.erase("wall_seconds");
  CHECK(ra.dump() == rb.dump());
}

TEST_CASE("invalid bins exits with the config code and writes nothing") {
  TempDir dir;
  auto csv = dir.path / "demo.csv";
  write_demo_csv(csv);
  auto out = dir.path / "never.jsonl";
  int rc = run("valuate --input " + csv.string() +
               " --label y --id-column id --bins 0 --parties 2 --out " +
               out.string());
  CHECK(rc == 2);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("parse failures exit with the parse code") {
  TempDir dir;
  CHECK(run("valuate --input " + (dir.path / "missing.csv").string() +
            " --label y") == 3);

  auto dup = dir.path / "dup.csv";
  std::ofstream(dup) << "id,a,y\ns1,1,0\ns1,2,1\n";
  CHECK(run("valuate --input " + dup.string() +
            " --label y --id-column id --parties 1 --features-per-party 1") ==
        3);

  auto ragged = dir.path / "ragged.csv";
  std::ofstream(ragged) << "id,a,y\ns1,1,0\ns2,2\n";
  CHECK(run("valuate --input " + ragged.string() + " --label y") == 3);
}

TEST_CASE("oversize permutation runs exit with the scale code") {
  CHECK(run("valuate --parties 9 --n-samples 32 --method permutations") == 5);
}

TEST_CASE("attack-sim reports the expected detection rates") {
  TempDir dir;
  auto zero = dir.path / "zero.jsonl";
  CHECK(run("attack-sim --behavior zero --trials 30 --n-samples 32 "
            "--parties 2 --format jsonl --out " +
            zero.string()) == 0);
  auto zr = read_jsonl(zero);
  CHECK(zr["detection_rate"].get<double>() == 1.0);

  auto honest = dir.path / "honest.jsonl";
  CHECK(run("attack-sim --behavior honest --trials 30 --n-samples 32 "
            "--parties 2 --format jsonl --out " +
            honest.string()) == 0);
  auto hr = read_jsonl(honest);
  CHECK(hr["detection_rate"].get<double>() == 0.0);
  CHECK(hr["count_mismatches"].get<std::uint64_t>() == 0);
}

TEST_CASE("bench sweep over parties shows query growth") {
  TempDir dir;
  auto out = dir.path / "bench.jsonl";
  CHECK(run("bench --sweep n_parties --values 2 3 --reps 1 --n-samples 64 "
            "--format jsonl --out " +
            out.string()) == 0);
  auto record = read_jsonl(out);
  REQUIRE(record["rows"].size() == 2);
  CHECK(record["rows"][1]["psi_rounds"].get<std::uint64_t>() >
        record["rows"][0]["psi_rounds"].get<std::uint64_t>());
}
