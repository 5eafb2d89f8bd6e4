#include <gtest/gtest.h>

#include <filesystem>

#include "specloss/experiment.hpp"
#include "specloss/pgm.hpp"

using namespace specloss;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("specloss_test_" + name);
  fs::remove_all(p);
  return p;
}

// A sweep small enough to run in a few seconds.
std::string tiny_config(const fs::path& out, const std::string& alphas = "0") {
  return "seed = 5\n"
         "output_dir = " + out.string() + "\n"
         "grid_size = 64\n"
         "n_views = 64\n"
         "n_channels = 64\n"
         "n_phantoms = 3\n"
         "n_train_phantoms = 2\n"
         "train_realizations = 1\n"
         "ensemble = 3\n"
         "epochs = 2\n"
         "steps_per_epoch = 3\n"
         "batch_size = 2\n"
         "patch_size = 32\n"
         "n_taps = 9\n"
         "tile = 32\n"
         "roi_center_row = 32\n"
         "roi_center_col = 32\n"
         "roi_width = 32\n"
         "roi_height = 32\n"
         "metric_patch = 32\n"
         "alpha_list = " + alphas + "\n";
}

}  // namespace

TEST(ParseConfig, MinimalFileFillsDocumentedDefaults) {
  const auto c = parse_config("# only what is required\nseed = 42\noutput_dir = runs/a\n");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.output_dir, fs::path("runs/a"));
  ExperimentConfig d;
  d.seed = 42;
  d.output_dir = "runs/a";
  EXPECT_EQ(to_text(c), to_text(d));
  EXPECT_EQ(c.n_views, 360u);
  EXPECT_EQ(c.n_channels, 384u);
  EXPECT_EQ(c.i0, 1e4);
  EXPECT_EQ(c.sigma_e, 5.0);
  EXPECT_EQ(c.alpha_list, (std::vector<double>{0.0, 0.6, 0.8}));
  EXPECT_EQ(c.nps_bins, 256u);
}

TEST(ParseConfig, AlphaListGivesThreeRuns) {
  const auto c = parse_config("seed = 1\noutput_dir = x\nalpha_list = 0, 0.6, 0.8\n");
  EXPECT_EQ(c.alpha_list, (std::vector<double>{0.0, 0.6, 0.8}));
}

TEST(ParseConfig, InvalidValueNamesKeyAndLine) {
  try {
    parse_config("seed = 1\noutput_dir = x\ni0 = -5\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("i0"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(ParseConfig, RejectsMalformedFiles) {
  const std::string base = "seed = 1\noutput_dir = x\n";
  auto line_of = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{999};
  };
  EXPECT_EQ(line_of(base + "learning_rte = 0.1\n"), 3u);    // unknown key
  EXPECT_EQ(line_of(base + "epochs = ten\n"), 3u);          // type mismatch
  EXPECT_EQ(line_of(base + "epochs = 3\nepochs = 4\n"), 4u);  // duplicate
  EXPECT_EQ(line_of(base + "just words\n"), 3u);
  EXPECT_EQ(line_of(base + "alpha_list = 0, -1\n"), 3u);
  EXPECT_EQ(line_of(base + "n_taps = 64\n"), 3u);
  EXPECT_EQ(line_of(base + "f1_cutoff = 0.5\n"), 3u);
  EXPECT_EQ(line_of(base + "phi = cubic\n"), 3u);
  EXPECT_EQ(line_of(base + "n_phantoms = 4\nn_train_phantoms = 4\n"), 4u);
  EXPECT_NE(line_of("output_dir = x\n"), 999u);  // missing seed
  EXPECT_NE(line_of("seed = 3\n"), 999u);        // missing output_dir
}

TEST(ParseConfig, ResolvedTextRoundTrips) {
  auto c = parse_config("seed = 9\noutput_dir = o\nalpha_list = 0.25, 1\nphi = absolute\nloss_axes = both\n");
  const auto text = to_text(c);
  EXPECT_EQ(to_text(parse_config(text)), text);
}

TEST(SeedDiscipline, StreamsAreDistinctAndAlphaIndependent) {
  ExperimentConfig c;
  c.seed = 77;
  EXPECT_NE(stage_seed(c, SeedStage::train_noise, 0), stage_seed(c, SeedStage::heldout_noise, 0));
  EXPECT_NE(stage_seed(c, SeedStage::train_noise, 0), stage_seed(c, SeedStage::train_noise, 1));
  EXPECT_EQ(stage_seed(c, SeedStage::batches), derive_seed(77, 5));

  const auto d1 = scratch_dir("seed_a"), d2 = scratch_dir("seed_b");
  const auto c1 = parse_config(tiny_config(d1, "0"));
  const auto c2 = parse_config(tiny_config(d2, "0.6, 0.8"));
  for (const auto* c : {&c1, &c2}) {
    stage_phantom(*c);
    stage_simulate(*c);
  }
  const ArtifactPaths a1{d1}, a2{d2};
  EXPECT_EQ(detail::read_file(a1.train_noisy()), detail::read_file(a2.train_noisy()));
  EXPECT_EQ(detail::read_file(a1.heldout_noisy()), detail::read_file(a2.heldout_noisy()));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Report, FormatIsExact) {
  ReportRow r;
  r.alpha = 0.6;
  r.entropy_bits = 7.5;
  r.inband_residual_ratio = 0.25;
  r.highband_preservation_ratio = 0.5;
  r.final_loss = 0.125;
  ReportRow base;
  base.entropy_bits = 7.75;
  base.inband_residual_ratio = base.highband_preservation_ratio = 1.0;
  EXPECT_EQ(format_report({r}, base),
            "alpha,entropy_bits,inband_residual_ratio,highband_preservation_ratio,final_loss\n"
            "0.6,7.500000,0.250000,0.500000,0.125\n"
            "uncorrected,7.750000,1.000000,1.000000,\n");
}

TEST(Report, RefusesImpossibleEntropies) {
  ReportRow r;
  r.alpha = 0.0;
  r.entropy_bits = 8.5;
  ReportRow base;
  base.entropy_bits = 7.0;
  EXPECT_THROW(format_report({r}, base), MetricIntegrityError);
  r.entropy_bits = 7.0;
  base.entropy_bits = -0.1;
  EXPECT_THROW(format_report({r}, base), MetricIntegrityError);
  EXPECT_THROW(format_report({}, base), UsageError);
}

TEST(Report, UnwritablePathIsIoError) {
  ReportRow r;
  r.alpha = 0.0;
  r.entropy_bits = 7.0;
  EXPECT_THROW(emit_report({r}, r, scratch_dir("missing") / "nested" / "report.csv"), IoError);
}

TEST(RunExperiment, SingleAlphaProducesOneModelAndBaseline) {
  const auto dir = scratch_dir("single");
  const auto cfg = parse_config(tiny_config(dir, "0"));
  const auto rows = run_experiment(cfg);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].alpha, 0.0);
  EXPECT_FALSE(rows[1].alpha.has_value());
  const ArtifactPaths a{dir};
  EXPECT_TRUE(fs::exists(ArtifactPaths::model(a.alpha_dir(0.0))));
  EXPECT_TRUE(fs::exists(ArtifactPaths::nps(a.alpha_dir(0.0))));
  EXPECT_TRUE(fs::exists(ArtifactPaths::nps(a.uncorrected_dir())));
  std::size_t models = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) models += e.path().filename() == "model.dnz1";
  EXPECT_EQ(models, 1u);
  const auto report = detail::read_file(a.report());
  EXPECT_EQ(std::count(report.begin(), report.end(), '\n'), 3);
  for (const auto& r : rows) {
    EXPECT_GE(r.entropy_bits, 0.0);
    EXPECT_LE(r.entropy_bits, 8.0);
  }
  // The report can be regenerated from the saved intermediates alone.
  fs::remove(a.report());
  run_stage(cfg, "report");
  EXPECT_EQ(detail::read_file(a.report()), report);
  fs::remove_all(dir);
}

TEST(RunExperiment, RerunIsByteIdentical) {
  const auto d1 = scratch_dir("rerun_a"), d2 = scratch_dir("rerun_b");
  run_experiment(parse_config(tiny_config(d1, "0, 0.8")));
  run_experiment(parse_config(tiny_config(d2, "0, 0.8")));
  const ArtifactPaths a1{d1}, a2{d2};
  EXPECT_EQ(detail::read_file(a1.report()), detail::read_file(a2.report()));
  for (double alpha : {0.0, 0.8}) {
    EXPECT_EQ(detail::read_file(ArtifactPaths::model(a1.alpha_dir(alpha))),
              detail::read_file(ArtifactPaths::model(a2.alpha_dir(alpha))));
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(RunStage, FailureNamesTheStage) {
  const auto dir = scratch_dir("fail");
  const auto cfg = parse_config(tiny_config(dir));
  try {
    run_stage(cfg, "infer");
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "infer");
    EXPECT_EQ(std::string(e.what()).rfind("[infer] ", 0), 0u);
  }
  EXPECT_THROW(run_stage(cfg, "bogus"), UsageError);
  fs::remove_all(dir);
}

TEST(Pgm, WindowMapsLinearlyAndClamps) {
  const Grid<double> img(1, 4, std::vector<double>{-1.0, 0.0, 0.5, 2.0});
  const auto bytes = encode_pgm(img, 1.0, 0.5);
  const std::string header = "P5\n4 1\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 4);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 0]), 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 1]), 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 2]), 128);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 3]), 255);
  EXPECT_THROW(encode_pgm(img, 0.0, 0.0), ValidationError);
}
