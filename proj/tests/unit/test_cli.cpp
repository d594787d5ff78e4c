#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "support.hpp"
#include "vib/dsp/cache.hpp"
#include "vib/eval/manifest.hpp"
#include "vib/eval/metrics_log.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Result vibctl(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string(VIBCTL_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = vib::test::scratch_dir("cli-" + std::to_string(::getpid()));
    auto r = vibctl("synth --out " + corpus().string() + " --seed 3 --train 2 --valid 2 --test 2", root_);
    ASSERT_EQ(r.code, 0) << r.err;
    r = vibctl("featurize --manifest " + manifest() + " --out " + feats() +
                   " --dataset custom --seconds 0.66 --jobs 2",
               root_);
    ASSERT_EQ(r.code, 0) << r.err;
    ASSERT_NE(r.out.find("featurized 30, skipped 0, failed 0"), std::string::npos) << r.out;
  }
  static fs::path corpus() { return root_ / "corpus"; }
  static std::string manifest() { return (corpus() / "manifest.csv").string(); }
  static std::string feats() { return (root_ / "features").string(); }
  static std::string data_flags() {
    return "--manifest " + manifest() + " --features " + feats() + " --quiet --epochs 2";
  }
  static fs::path run_dir(const Result& r) {
    return nlohmann::json::parse(r.out).at("dir").get<std::string>();
  }

  static fs::path root_;
};

fs::path Cli::root_;

}  // namespace

TEST_F(Cli, FeaturizeIsIdempotent) {
  const auto before = fs::last_write_time(*fs::directory_iterator(feats()));
  auto r = vibctl("featurize --manifest " + manifest() + " --out " + feats() +
                      " --dataset custom --seconds 0.66",
                  root_);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("featurized 0, skipped 30"), std::string::npos) << r.out;
  EXPECT_EQ(fs::last_write_time(*fs::directory_iterator(feats())), before);
}

TEST_F(Cli, FeaturizeReportsCorruptFile) {
  auto dir = vib::test::scratch_dir("cli-corrupt");
  std::vector<std::string> wavs;
  for (const auto& row : vib::eval::read_manifest(manifest()).rows) {
    if (wavs.size() < 10) wavs.push_back(row.path);
  }
  { std::ofstream(dir / "broken.wav") << "not a wav file at all"; }
  std::ofstream m(dir / "m.csv");
  m << "path,label,split\n";
  for (std::size_t i = 0; i < 9; ++i) m << wavs[i] << ",0,train\n";
  m << (dir / "broken.wav").string() << ",0,train\n";
  m.close();
  auto r = vibctl("featurize --manifest " + (dir / "m.csv").string() + " --out " +
                      (dir / "f").string() + " --dataset custom --seconds 0.66",
                  dir);
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("broken.wav"), std::string::npos) << r.err;
  std::size_t caches = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "f")) ++caches;
  EXPECT_EQ(caches, 9u);
}

TEST_F(Cli, TessClipLengthIsTwoSeconds) {
  auto dir = vib::test::scratch_dir("cli-tess");
  const auto wav = vib::eval::read_manifest(manifest()).rows.front().path;
  { std::ofstream(dir / "m.csv") << "path,label,split\n" << wav << ",0,train\n"; }
  auto r = vibctl("featurize --manifest " + (dir / "m.csv").string() + " --out " +
                      (dir / "f").string() + " --dataset tess",
                  dir);
  ASSERT_EQ(r.code, 0) << r.err;
  auto fm = vib::io::read_cache(fs::directory_iterator(dir / "f")->path());
  EXPECT_EQ(fm.frames, 99u);
  r = vibctl("featurize --manifest " + (dir / "m.csv").string() + " --out " + (dir / "f").string() +
                 " --dataset tess --seconds 3",
             dir);
  EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(vibctl("", root_).code, 2);
  EXPECT_EQ(vibctl("train --method cnn --pct 7 " + data_flags(), root_).code, 2);
  auto r = vibctl("train --method cnn --k 20 " + data_flags(), root_);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("usage"), std::string::npos);
  EXPECT_EQ(vibctl("train --method vib " + data_flags(), root_).code, 2);
  EXPECT_EQ(vibctl("train --method bogus " + data_flags(), root_).code, 2);
  EXPECT_EQ(vibctl("sweep --grid --beta-sweep " + data_flags(), root_).code, 2);
  EXPECT_EQ(vibctl("evaluate --run " + (root_ / "nope").string(), root_).code, 2);
  auto empty = vib::test::scratch_dir("cli-empty-runs");
  EXPECT_EQ(vibctl("report --runs " + empty.string() + " --out " + (empty / "r").string(), root_).code, 2);
}

TEST_F(Cli, TrainIsDeterministicAndResumable) {
  auto a = vibctl("train --method cnn --seed 5 --runs " + (root_ / "ra").string() + " " + data_flags(), root_);
  ASSERT_EQ(a.code, 0) << a.err;
  auto b = vibctl("train --method cnn --seed 5 --runs " + (root_ / "rb").string() + " " + data_flags(), root_);
  ASSERT_EQ(b.code, 0) << b.err;
  const fs::path da = run_dir(a), db = run_dir(b);
  EXPECT_EQ(da.filename(), db.filename());
  const std::string log = slurp(da / "metrics.jsonl");
  EXPECT_EQ(log, slurp(db / "metrics.jsonl"));
  EXPECT_EQ(vib::eval::read_metrics_log(da / "metrics.jsonl").size(), 4u);
  EXPECT_TRUE(fs::exists(da / "checkpoint"));
  EXPECT_TRUE(fs::exists(da / "config.json"));

  auto again = vibctl("train --method cnn --seed 5 --runs " + (root_ / "ra").string() + " " +
                          "--manifest " + manifest() + " --features " + feats() + " --epochs 2",
                      root_);
  EXPECT_EQ(again.code, 0);
  EXPECT_NE(again.err.find("skipped"), std::string::npos) << again.err;
  EXPECT_EQ(slurp(da / "metrics.jsonl"), log);

  auto replay = vibctl("train --config " + (da / "config.json").string() + " --quiet --runs " +
                           (root_ / "rc").string(),
                       root_);
  ASSERT_EQ(replay.code, 0) << replay.err;
  EXPECT_EQ(slurp(run_dir(replay) / "metrics.jsonl"), log);

  auto other = vibctl("train --method cnn --seed 6 --runs " + (root_ / "ra").string() + " " + data_flags(), root_);
  EXPECT_NE(run_dir(other).filename(), da.filename());
}

TEST_F(Cli, VibRunAndEvaluate) {
  auto t = vibctl("train --method vib --k 4 --beta 0.005 --runs " + (root_ / "rv").string() + " " +
                      data_flags(),
                  root_);
  ASSERT_EQ(t.code, 0) << t.err;
  const fs::path dir = run_dir(t);
  auto first = vib::eval::read_metrics_log(dir / "metrics.jsonl");
  EXPECT_EQ(first.front().K, 4u);
  EXPECT_EQ(first.front().method, "vib");

  auto e1 = vibctl("evaluate --run " + dir.string() + " --split test", root_);
  auto e2 = vibctl("evaluate --run " + dir.string() + " --split test --jobs 2", root_);
  ASSERT_EQ(e1.code, 0) << e1.err;
  EXPECT_EQ(e1.out, e2.out);
  const auto j = nlohmann::json::parse(e1.out);
  for (const char* key : {"accuracy", "f1", "ce"}) EXPECT_TRUE(j.contains(key));
  EXPECT_EQ(vibctl("evaluate --run " + dir.string() + " --split valid", root_).code, 0);
  auto log = vib::eval::read_metrics_log(dir / "metrics.jsonl");
  EXPECT_EQ(log.size(), first.size() + 3);
  EXPECT_EQ(log.back().split, "valid");
  // The final-epoch validation pass and the standalone evaluation agree.
  EXPECT_EQ(log.back().ce, first.back().ce);
  EXPECT_EQ(log.back().accuracy, first.back().accuracy);

  auto copy = root_ / "rv-corrupt";
  fs::remove_all(copy);
  fs::copy(dir, copy);
  {
    std::fstream f(copy / "checkpoint", std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  auto bad = vibctl("evaluate --run " + copy.string(), root_);
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.err.find("format"), std::string::npos) << bad.err;
}

TEST_F(Cli, SweepsAndReport) {
  const std::string runs = (root_ / "rs").string();
  auto g = vibctl("sweep --grid --grid-k 2 4 --grid-beta 0.001 0.01 --epochs 1 --runs " + runs +
                      " --jobs 2 --manifest " + manifest() + " --features " + feats() + " --quiet",
                  root_);
  ASSERT_EQ(g.code, 0) << g.err;
  EXPECT_NE(g.out.find("best:"), std::string::npos);
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(runs)) dirs += e.is_directory();
  EXPECT_EQ(dirs, 4u);
  auto again = vibctl("sweep --grid --grid-k 2 4 --grid-beta 0.001 0.01 --epochs 1 --runs " + runs +
                          " --manifest " + manifest() + " --features " + feats(),
                      root_);
  ASSERT_EQ(again.code, 0);
  std::size_t skipped = 0;
  for (std::size_t p = again.err.find("skipped"); p != std::string::npos; p = again.err.find("skipped", p + 1)) ++skipped;
  EXPECT_EQ(skipped, 4u);
  EXPECT_EQ(g.out, again.out);

  auto b = vibctl("sweep --beta-sweep --k 2 --betas 0 1 10 --epochs 1 --runs " + runs + " --out " + runs +
                      "/beta --manifest " + manifest() + " --features " + feats() + " --quiet",
                  root_);
  ASSERT_EQ(b.code, 0) << b.err;
  const std::string csv = slurp(fs::path(runs) / "beta" / "beta_sweep_custom_100_0.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

  auto best = nlohmann::json::parse(slurp(fs::path(runs) / "grid_custom_100_0.json")).at("best");
  const std::string best_dir = runs + "/" + best.at("run_id").get<std::string>();
  ASSERT_EQ(vibctl("evaluate --run " + best_dir, root_).code, 0);
  auto rep = vibctl("report --runs " + runs + " --out " + (root_ / "reports").string(), root_);
  ASSERT_EQ(rep.code, 0) << rep.err;
  const std::string table = slurp(root_ / "reports" / "results.csv");
  EXPECT_NE(table.find("custom,vib,NA,NA,NA,NA,NA,NA,NA,NA,"), std::string::npos) << table;
  EXPECT_TRUE(fs::exists(root_ / "reports" / "curves" / (best.at("run_id").get<std::string>() + ".csv")));
  EXPECT_EQ(rep.out, vibctl("report --runs " + runs + " --out " + (root_ / "reports").string(), root_).out);
}
