#include <cstdio>
#include <cstdlib>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"

#include "fragvqa/file_util.hpp"
#include "fragvqa/fragment_io.hpp"
#include "fragvqa/video.hpp"
#include "test_util.hpp"

using namespace fragvqa;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(FRAGVQA_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r{0, ""};
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("").code == 2);
  CHECK(run("sample --input x").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("validate --stages 4x4 --json").code == 2);
}

TEST_CASE("synth, sample and score") {
  testutil::TempDir dir;
  REQUIRE(run("synth --frames 16 --height 40 --width 40 --out " + q(dir / "v.raw")).code == 0);
  auto s = run("sample --json --input " + q(dir / "v.raw") +
               " --gt 2 --gf 2 --tf 4 --sf 16 --seed 9 --align per_clip --out " + q(dir / "f.bin"));
  REQUIRE(s.code == 0);
  const auto j = json::parse(s.out);
  CHECK(j.at("shape") == json::array({8, 32, 32, 3}));
  const auto frag = read_fragment(dir / "f.bin");
  CHECK(frag.config.alignment == Alignment::kPerClip);
  CHECK(verify_provenance(frag, load_video(dir / "v.raw")).ok);

  write_file_atomic(dir / "net.json",
                    json{{"base_window", {4, 4, 4}}, {"base_grid", {2, 2, 2}}}.dump());
  REQUIRE(run("init-weights --seed 3 --config " + q(dir / "net.json") + " --out " + q(dir / "w.bin")).code == 0);
  const auto sc = run("score --json --frag " + q(dir / "f.bin") + " --weights " + q(dir / "w.bin") +
                      " --map-out " + q(dir / "map.csv"));
  REQUIRE(sc.code == 0);
  const auto sj = json::parse(sc.out);
  CHECK(sj.at("g_pr").is_number());
  CHECK(std::filesystem::exists(dir / "map.pgm"));
  CHECK(read_file_text(dir / "map.csv").rfind("t,h,w,l_pr\n", 0) == 0);
  CHECK(run("score --frag " + q(dir / "f.bin") + " --weights " + q(dir / "missing.bin")).code == 1);
}

TEST_CASE("validate reports violations through the exit code") {
  const auto ok = run("validate --json --sf 32 --tf 4 --stages 4x4x4:2x2x2:2x2x2:2x2x2");
  CHECK(ok.code == 0);
  CHECK(json::parse(ok.out).at("ok") == true);
  const auto bad = run("validate --json --sf 48 --tf 4 --stages 4x4x4:2x2x2:2x2x2:2x2x2 --suggest");
  CHECK(bad.code == 1);
  const auto j = json::parse(bad.out);
  CHECK(j.at("violation").at("stage") == 3);
  CHECK(j.at("suggested_patch_sides").size() > 0);
}

TEST_CASE("metrics, loss, fraction and stability") {
  testutil::TempDir dir;
  write_file_atomic(dir / "p.csv", std::string_view("pred\n0.5\n0.2\n"));
  write_file_atomic(dir / "g.csv", std::string_view("mos\n1\n2\n"));
  const auto l = run("loss --json --pred " + q(dir / "p.csv") + " --gt " + q(dir / "g.csv"));
  REQUIRE(l.code == 0);
  const auto lj = json::parse(l.out);
  CHECK(lj.at("mono").get<double>() == doctest::Approx(0.6));
  CHECK(lj.at("fusion").get<double>() == doctest::Approx(lj.at("lin").get<double>() + 0.18));
  const auto m = run("metrics --json --pred " + q(dir / "p.csv") + " --gt " + q(dir / "g.csv"));
  CHECK(json::parse(m.out).at("plcc").get<double>() == doctest::Approx(-1.0));

  const auto f = run("fraction --json --preset fastervqa --height 1080 --width 1920");
  CHECK(json::parse(f.out).at("spatial_percent").get<double>() == doctest::Approx(2.4198).epsilon(1e-4));

  write_file_atomic(dir / "s.csv", std::string_view("0,10\n"));
  const auto st = run("stability --json --scores " + q(dir / "s.csv") + " --range 0 100");
  CHECK(json::parse(st.out).at("normalized_std").get<double>() == doctest::Approx(0.05));
  CHECK(run("stability --range 0 100").code == 2);
}

TEST_CASE("batch exit code reflects item failures") {
  testutil::TempDir dir;
  REQUIRE(run("synth --frames 16 --height 40 --width 40 --out " + q(dir / "v.raw")).code == 0);
  const json manifest{{"config", {{"gt", 2}, {"gf", 2}, {"tf", 4}, {"sf", 16}}},
                      {"items", json::array({json{{"video", "v.raw"}, {"repeats", 2}},
                                             json{{"video", "gone.raw"}}})}};
  write_file_atomic(dir / "m.json", manifest.dump());
  const auto r = run("batch --json --manifest " + q(dir / "m.json") + " --out " + q(dir / "out") + " --jobs 2");
  CHECK(r.code == 1);
  CHECK(json::parse(r.out).at("failed") == 1);
  CHECK(std::filesystem::exists(dir / "out/item_000/rep_001.bin"));
}
