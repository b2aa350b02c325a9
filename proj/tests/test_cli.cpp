#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "abda/abda.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  static fs::path dir() {
    static const fs::path d = [] {
      auto p = fs::temp_directory_path() / "abda_cli_test";
      fs::remove_all(p);
      fs::create_directories(p);
      return p;
    }();
    return d;
  }

  static Outcome cli(const std::string& args) {
    const auto out = dir() / "stdout.txt";
    const auto err = dir() / "stderr.txt";
    const std::string cmd = std::string(ABDA_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Outcome r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  // synth + fit once for the whole suite
  static void SetUpTestSuite() {
    const auto s = cli("synth --n 400 --d 3 --seed 5 -o " + (dir() / "syn").string());
    ASSERT_EQ(s.code, 0) << s.err;
    const auto f = cli("fit " + (dir() / "syn" / "train.csv").string() + " -o " + (dir() / "model.json").string() +
                       " --iters 30 --burn-in 15 --seed 9 --trace " + (dir() / "trace.csv").string());
    ASSERT_EQ(f.code, 0) << f.err;
  }

  static std::string model() { return (dir() / "model.json").string(); }
  static std::string test_csv() { return (dir() / "syn" / "test.csv").string(); }
};

}  // namespace

TEST_F(Cli, SynthWritesSplitsAndTruth) {
  for (const char* f : {"data.csv", "train.csv", "valid.csv", "test.csv", "truth.json"}) {
    EXPECT_TRUE(fs::exists(dir() / "syn" / f)) << f;
  }
  const auto train = abda::load_csv((dir() / "syn" / "train.csv").string());
  const auto test = abda::load_csv(test_csv());
  EXPECT_EQ(train.rows() + test.rows() + abda::load_csv((dir() / "syn" / "valid.csv").string()).rows(), 400u);
  const auto truth = abda::load_truth((dir() / "syn" / "truth.json").string());
  EXPECT_EQ(truth.types.size(), 3u);
}

TEST_F(Cli, FitIsReproducibleForSeed) {
  const auto again = (dir() / "model2.json").string();
  const auto f = cli("fit " + (dir() / "syn" / "train.csv").string() + " -o " + again + " --iters 30 --burn-in 15 --seed 9");
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_EQ(slurp(again), slurp(model()));
  const auto trace = slurp(dir() / "trace.csv");
  EXPECT_EQ(trace.rfind("iteration,mean_loglik\n", 0), 0u);
  EXPECT_NE(trace.find("# abda"), std::string::npos);
}

TEST_F(Cli, ImputeFillsMissingCells) {
  auto data = abda::load_csv(test_csv());
  data.set_missing(0, 0);
  data.set_missing(1, 2);
  const auto holes = (dir() / "holes.csv").string();
  abda::save_csv(holes, data);
  for (const char* mode : {"map", "mc"}) {
    const auto out = (dir() / (std::string("filled_") + mode + ".csv")).string();
    const auto r = cli("impute " + model() + " " + holes + " -o " + out + " --mode " + mode);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto filled = abda::load_csv(out);
    EXPECT_EQ(filled.missing_count(), 0u);
    EXPECT_EQ(filled.rows(), data.rows());
    EXPECT_EQ(filled.value(2, 1), data.value(2, 1));
  }
}

TEST_F(Cli, ScoreOneLinePerRow) {
  const auto out = dir() / "scores.csv";
  const auto r = cli("score " + model() + " " + test_csv() + " -o " + out.string());
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(slurp(out));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "row,nll,rank,path");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') ++rows;
  }
  EXPECT_EQ(rows, abda::load_csv(test_csv()).rows());
}

TEST_F(Cli, TypesPatternsAndReport) {
  const auto types = dir() / "types.csv";
  ASSERT_EQ(cli("types " + model() + " -o " + types.string()).code, 0);
  EXPECT_NE(slurp(types).find("x0"), std::string::npos);

  const auto pats = dir() / "patterns.csv";
  const auto p = cli("patterns " + model() + " -o " + pats.string() + " --theta 0.5");
  ASSERT_EQ(p.code, 0) << p.err;
  EXPECT_EQ(slurp(pats).rfind("rank,support,arity,anchor,path,pattern\n", 0), 0u);

  const auto rep = dir() / "report.md";
  const auto r = cli("report " + model() + " " + test_csv() + " -o " + rep.string() + " --points 20");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(slurp(rep).empty());
  EXPECT_TRUE(fs::exists(dir() / "report_densities.csv"));
}

TEST_F(Cli, ErrorsExitNonZeroWithCode) {
  const auto bad = dir() / "bad.csv";
  std::ofstream(bad) << "a:C,b:D\n1,2.5\n";
  const auto r = cli("fit " + bad.string() + " -o " + (dir() / "x.json").string() + " --seed 1");
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: MixedTypeColumn:", 0), 0u) << r.err;

  const auto corrupt = dir() / "corrupt.json";
  std::ofstream(corrupt) << "{\"format\":\"abda-model\"";
  const auto c = cli("types " + corrupt.string() + " -o " + (dir() / "t.csv").string());
  EXPECT_EQ(c.code, 1);
  EXPECT_EQ(c.err.rfind("error: CorruptFile:", 0), 0u) << c.err;

  const auto u = cli("fit");
  EXPECT_NE(u.code, 0);
  EXPECT_NE(u.err.find("error:"), std::string::npos);
}
