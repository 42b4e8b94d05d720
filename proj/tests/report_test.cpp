#include <gtest/gtest.h>

#include <filesystem>

#include "lsadapt/experiment.hpp"
#include "lsadapt/report.hpp"

namespace lsadapt {
namespace fs = std::filesystem;
namespace {

class ReportTest : public ::testing::Test {
 protected:
  fs::path dir = fs::temp_directory_path() / ("lsadapt_report_" + std::string(
      ::testing::UnitTest::GetInstance()->current_test_info()->name()));
  void SetUp() override { fs::remove_all(dir); }
  void TearDown() override { fs::remove_all(dir); }

  static RunLog run_log(int rounds) {
    ExperimentConfig cfg;
    cfg.loop.rounds = rounds;
    cfg.source_subjects = 40;
    cfg.target_subjects = 30;
    const ExperimentResult r = run_experiment(cfg);
    return {r.log, r.test};
  }
};

TEST_F(ReportTest, EmptyLogRejected) { EXPECT_THROW(plots_from_log(RunLog{}), std::invalid_argument); }

TEST_F(ReportTest, SingleRoundHasOnePointPerSeries) {
  const RunLog log = run_log(1);
  const auto plots = plots_from_log(log);
  for (const auto& p : plots) {
    if (p.name == "froc" || p.name == "pr") continue;
    for (const auto& s : p.series) EXPECT_EQ(s.points.size(), 1u) << p.name << " " << s.label;
  }
  const std::string svg = render_svg(plots.front());
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("<circle"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST_F(ReportTest, FrocHasOneCurvePerArm) {
  const RunLog log = run_log(3);
  const auto plots = plots_from_log(log);
  const auto it = std::find_if(plots.begin(), plots.end(), [](const Plot& p) { return p.name == "froc"; });
  ASSERT_NE(it, plots.end());
  ASSERT_EQ(it->series.size(), 4u);
  EXPECT_EQ(it->series[3].label, "prior_guided+anchor");
}

TEST_F(ReportTest, ReplotFromDataIsIdentical) {
  const RunLog log = run_log(4);
  const auto written = write_report(log, dir);
  ASSERT_FALSE(written.empty());
  std::vector<std::string> first;
  for (const auto& p : written) first.push_back(read_file(p));
  for (const auto& p : written) fs::remove(p);
  const auto again = render_plot_dir(dir);
  ASSERT_EQ(again, written);
  for (std::size_t i = 0; i < again.size(); ++i) EXPECT_EQ(read_file(again[i]), first[i]) << again[i];
}

TEST_F(ReportTest, DataFilesHoldTheLoggedNumbers) {
  const RunLog log = run_log(2);
  write_report(log, dir);
  const auto plots = read_plot_data(dir);
  const auto mu = std::find_if(plots.begin(), plots.end(), [](const Plot& p) { return p.name == "prior_mu"; });
  ASSERT_NE(mu, plots.end());
  EXPECT_EQ(mu->series[0].label, log.rounds[0].arm);
  EXPECT_EQ(mu->series[0].points[0].second, log.rounds[0].mu);
}

TEST_F(ReportTest, IndexVersionChecked) {
  fs::create_directories(dir);
  write_file_atomic(dir / "plots.index", "lsadapt-plots 3\n");
  EXPECT_THROW(read_plot_data(dir), FormatError);
}

}  // namespace
}  // namespace lsadapt
