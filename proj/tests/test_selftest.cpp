#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>

#include "rateval/selftest.hpp"
#include "test_util.hpp"

using namespace rateval;

TEST(Selftest, PristineBuildPassesEverySuite) {
  const auto report = selftest::run();
  EXPECT_TRUE(report.passed()) << report.text();
  ASSERT_EQ(report.suites.size(), 3u);
  for (const auto& s : report.suites) EXPECT_GT(s.checks, 0u) << s.name;
  EXPECT_NE(report.text().find("selftest: all suites passed"), std::string::npos);
}

TEST(Selftest, PerturbedWeightsFailTheQwkSuiteByName) {
  selftest::Options options;
  options.perturb_weights = true;
  const auto report = selftest::run(options);
  EXPECT_FALSE(report.passed());
  const auto text = report.text();
  EXPECT_NE(text.find("FAIL agreement-brute-force"), std::string::npos) << text;
  EXPECT_NE(text.find("violated: qwk equals brute-force definition"), std::string::npos) << text;
  EXPECT_NE(text.find("PASS eigen-residuals"), std::string::npos) << text;
  EXPECT_NE(text.find("PASS preprocessing-goldens"), std::string::npos) << text;
}

TEST(Selftest, ReportTextIsDeterministic) {
  EXPECT_EQ(selftest::run().text(), selftest::run().text());
  selftest::Options perturbed;
  perturbed.perturb_weights = true;
  EXPECT_EQ(selftest::run(perturbed).text(), selftest::run(perturbed).text());
}

TEST(Selftest, CliExitCodes) {
  test_util::TempDir dir;
  const auto out = dir.path() / "out.txt";
  auto run = [&](const std::string& args) {
    const int status = std::system((std::string(RATEVAL_CLI_PATH) + " selftest " + args + " >" + out.string()).c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  EXPECT_EQ(run(""), 0);
  const auto first = test_util::slurp(out);
  EXPECT_EQ(run(""), 0);
  EXPECT_EQ(test_util::slurp(out), first);
  EXPECT_EQ(run("--perturb-weights"), 1);
  EXPECT_NE(test_util::slurp(out).find("agreement-brute-force"), std::string::npos);
}
