#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "ctgpt/model/report_model.hpp"
#include "ctgpt/synth/corpus.hpp"

using namespace ctgpt;
using namespace ctgpt::synth;

namespace {

std::vector<ManifestRecord> numbered(std::size_t n) {
  std::vector<ManifestRecord> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"volumes/r" + std::to_string(i) + ".ctvl", "report", ""});
  return out;
}

std::array<std::size_t, 3> split_counts(const Manifest& m) {
  std::array<std::size_t, 3> c{};
  for (const auto& r : m.records) ++c[r.split == "train" ? 0 : r.split == "val" ? 1 : 2];
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ctgpt_synth_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(SplitManifest, SmallCounts) {
  EXPECT_EQ(split_counts(split_manifest(numbered(10), {0.8, 0.1, 0.1}, 1)), (std::array<std::size_t, 3>{8, 1, 1}));
  EXPECT_EQ(split_counts(split_manifest(numbered(40), {0.8, 0.1, 0.1}, 1)), (std::array<std::size_t, 3>{32, 4, 4}));
}

TEST(SplitManifest, LargeCorpusWithinOne) {
  auto c = split_counts(split_manifest(numbered(1886), {0.8, 0.1, 0.1}, 7));
  EXPECT_EQ(c[0] + c[1] + c[2], 1886u);
  EXPECT_LE(std::abs(static_cast<long>(c[0]) - 1508), 1);
  EXPECT_LE(std::abs(static_cast<long>(c[1]) - 189), 1);
  EXPECT_LE(std::abs(static_cast<long>(c[2]) - 189), 1);
}

TEST(SplitManifest, SeededAndOrderPreserving) {
  auto a = split_manifest(numbered(50), {0.8, 0.1, 0.1}, 3);
  EXPECT_EQ(a.records, split_manifest(numbered(50), {0.8, 0.1, 0.1}, 3).records);
  EXPECT_NE(a.records, split_manifest(numbered(50), {0.8, 0.1, 0.1}, 4).records);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(a.records[i].volume, numbered(50)[i].volume);
  EXPECT_THROW(split_manifest({}, {0.8, 0.1, 0.1}, 1), ArgumentError);
  EXPECT_THROW(split_manifest(numbered(5), {0.5, 0.1, 0.1}, 1), ArgumentError);
}

TEST(ManifestIo, JsonlRoundTrip) {
  Manifest m{{{"volumes/a.ctvl", "a \"quoted\" report.", "train"}, {"volumes/b.ctvl", "b", "val"}}};
  EXPECT_EQ(Manifest::from_jsonl(m.to_jsonl()).records, m.records);
  EXPECT_EQ(m.records[0].id(), "a");
  EXPECT_EQ(m.split("val").size(), 1u);
  EXPECT_THROW(Manifest::from_jsonl("{\"volume\": 3}\n"), DataError);
  EXPECT_THROW(Manifest::from_jsonl("not json\n"), DataError);
  EXPECT_THROW(Manifest::from_jsonl("{\"volume\":\"a\",\"report\":\"r\",\"split\":\"dev\"}\n"), DataError);
}

TEST(Render, SphereSurvivesPrepChain) {
  const volume::Dims3 dims{24, 48, 48};
  const volume::Spacing3 spacing{1.5, 0.75, 0.75};
  FindingSpec f{FindingKind::Sphere, {12, 20, 30}, 4.5, 50.0f};
  auto v = render({f}, dims, spacing, "s");
  EXPECT_EQ(v.slope, 1.0f);
  EXPECT_EQ(v.intercept, 0.0f);
  volume::PrepConfig cfg;
  cfg.target_dims = dims;
  auto hu = volume::prepare_hu(volume::to_hounsfield(v), {v.spacing_mm[0], v.spacing_mm[1], v.spacing_mm[2]}, cfg);
  EXPECT_EQ(hu.at(12, 20, 30), 50.0f);
  EXPECT_EQ(hu.at(0, 0, 0), kBackgroundHu);
}

TEST(Reports, PureFunctionOfFindings) {
  const volume::Dims3 dims{24, 48, 48};
  FindingSpec f{FindingKind::Box, {4, 10, 40}, 7.5, 180.0f};
  EXPECT_EQ(report_text({f}, ReportStyle::ShortReport, dims), report_text({f}, ReportStyle::ShortReport, dims));
  EXPECT_NE(report_text({f}, ReportStyle::ShortReport, dims), report_text({f}, ReportStyle::LongReport, dims));
  EXPECT_EQ(report_text({f}, ReportStyle::ShortReport, dims), "large calcified mass in the upper left region.");
  for (auto style : {ReportStyle::ShortReport, ReportStyle::LongReport}) {
    EXPECT_NE(report_text({}, style, dims).find(normal_sentence(style)), std::string::npos);
  }
  EXPECT_GT(report_text({f}, ReportStyle::LongReport, dims).size(),
            2 * report_text({f}, ReportStyle::ShortReport, dims).size());
}

TEST(Generate, DeterministicCorpusFiles) {
  CorpusSpec spec;
  spec.n = 12;
  spec.seed = 5;
  auto a = scratch("a"), b = scratch("b");
  auto ma = generate_corpus(spec, a);
  generate_corpus(spec, b);
  EXPECT_EQ(slurp(a / "manifest.jsonl"), slurp(b / "manifest.jsonl"));
  for (const auto& r : ma.records) EXPECT_EQ(slurp(a / r.volume), slurp(b / r.volume)) << r.volume;
  EXPECT_EQ(ma.records.front().id(), "rec0000");

  volume::PrepConfig cfg;
  cfg.target_dims = spec.dims;
  for (const auto& r : ma.records) {
    auto p = volume::prepare(volume::read_ctvol(a / r.volume), cfg);
    for (float x : p.values) ASSERT_TRUE(x >= -1.0f && x <= 1.0f);
  }
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST(Generate, FindingsFitAndVary) {
  CorpusSpec spec;
  spec.n = 60;
  spec.seed = 9;
  std::set<std::size_t> counts;
  for (const auto& r : generate_records(spec)) {
    counts.insert(r.findings.size());
    for (const auto& f : r.findings) {
      const auto h = half_extent_voxels(f.radius_mm, spec.spacing);
      for (std::size_t a = 0; a < 3; ++a) {
        EXPECT_GE(f.center[a], h[a]);
        EXPECT_LT(f.center[a] + h[a], spec.dims[a]);
      }
      EXPECT_GE(f.intensity, -1000.0f);
      EXPECT_LE(f.intensity, 200.0f);
    }
  }
  EXPECT_EQ(counts, (std::set<std::size_t>{0, 1, 2, 3}));
}

TEST(Generate, RejectsBadSpec) {
  CorpusSpec spec;
  spec.n = 5;
  EXPECT_THROW(spec.validate(), ArgumentError);
  spec.n = 10;
  spec.dims = {25, 48, 48};
  EXPECT_THROW(spec.validate(), ArgumentError);
}

TEST(Learnability, NearestCentroidSeparatesFindings) {
  CorpusSpec spec;
  spec.n = 100;
  spec.seed = 21;
  const auto records = generate_records(spec);
  auto cfg = model::desk_config();
  auto m = model::ReportModel<float>::create(cfg, lm::Vocab::build(model::prompt_texts(cfg)), 3);
  std::vector<std::vector<float>> feats;
  std::vector<int> label;
  for (const auto& r : records) {
    // Per-channel max and min over tokens: findings sit at random positions,
    // so only position-free summaries share a direction across samples.
    const auto pooled = m.pooled_tokens(volume::prepare(r.volume, cfg.prep));
    const std::size_t n = pooled.dim(1), d = pooled.dim(2);
    std::vector<float> f(2 * d);
    for (std::size_t k = 0; k < d; ++k) {
      f[k] = f[d + k] = pooled.data()[k];
      for (std::size_t t = 1; t < n; ++t) {
        f[k] = std::max(f[k], pooled.data()[t * d + k]);
        f[d + k] = std::min(f[d + k], pooled.data()[t * d + k]);
      }
    }
    feats.push_back(std::move(f));
    label.push_back(r.findings.empty() ? 0 : 1);
  }
  // Standardize each feature, then leave-one-out nearest centroid.
  const std::size_t dim = feats[0].size();
  for (std::size_t d = 0; d < dim; ++d) {
    double mu = 0, var = 0;
    for (const auto& f : feats) mu += f[d] / feats.size();
    for (const auto& f : feats) var += (f[d] - mu) * (f[d] - mu) / feats.size();
    const double sd = std::sqrt(var) + 1e-12;
    for (auto& f : feats) f[d] = static_cast<float>((f[d] - mu) / sd);
  }
  int correct = 0;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    std::vector<double> c[2] = {std::vector<double>(dim), std::vector<double>(dim)};
    int n[2] = {0, 0};
    for (std::size_t j = 0; j < feats.size(); ++j) {
      if (j == i) continue;
      ++n[label[j]];
      for (std::size_t d = 0; d < dim; ++d) c[label[j]][d] += feats[j][d];
    }
    double dist[2] = {0, 0};
    for (int k = 0; k < 2; ++k) {
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = feats[i][d] - c[k][d] / n[k];
        dist[k] += diff * diff;
      }
    }
    correct += (dist[1] < dist[0] ? 1 : 0) == label[i];
  }
  EXPECT_GT(correct, 90) << correct << "/100";
}
