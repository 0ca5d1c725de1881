#include <gtest/gtest.h>

#include "ctgpt/synth/corpus.hpp"
#include "ctgpt/train/gradcheck.hpp"
#include "ctgpt/train/trainer.hpp"

using namespace ctgpt;
using namespace ctgpt::train;

namespace {

struct Fixture {
  model::ReportModel<float> m;
  std::vector<Example> examples;
  std::vector<synth::SyntheticRecord> records;
};

Fixture make_fixture(std::size_t n_examples, std::uint64_t seed = 1) {
  synth::CorpusSpec spec;
  spec.n = 10;
  spec.seed = seed;
  auto records = synth::generate_records(spec);
  auto cfg = model::desk_config();
  auto texts = model::prompt_texts(cfg);
  for (const auto& r : records) texts.push_back(r.report);
  auto m = model::ReportModel<float>::create(cfg, lm::Vocab::build(texts), seed);
  std::vector<Example> ex;
  for (std::size_t i = 0; i < n_examples; ++i) {
    ex.push_back({records[i].volume.id, m.pooled_tokens(volume::prepare(records[i].volume, cfg.prep)), records[i].report});
  }
  return {std::move(m), std::move(ex), std::move(records)};
}

std::uint64_t hash_prefix(const ParamStore<float>& p, const std::string& prefix) { return p.hash(prefix); }

}  // namespace

TEST(Stages, TrainablePrefixes) {
  EXPECT_EQ(trainable_prefixes(Stage::Pretrain), (std::vector<std::string>{"projector."}));
  EXPECT_EQ(trainable_prefixes(Stage::Finetune), (std::vector<std::string>{"projector.", "lora."}));
  EXPECT_EQ(parse_stage("finetune"), Stage::Finetune);
  EXPECT_THROW(parse_stage("joint"), ArgumentError);
}

TEST(Stages, ConfigDefaults) {
  auto p = StageConfig::pretrain();
  EXPECT_DOUBLE_EQ(p.lr_max, 1e-3);
  EXPECT_EQ(p.epochs, 5u);
  EXPECT_EQ(p.batch_size, 1u);
  auto f = StageConfig::finetune();
  EXPECT_DOUBLE_EQ(f.lr_max, 2e-4);
  EXPECT_EQ(f.epochs, 2u);
  f.lr_max = 0;
  EXPECT_THROW(f.validate(), ArgumentError);
}

TEST(Strategy, PlansExpand) {
  auto t1 = StrategyPlan::named("T1");
  ASSERT_EQ(t1.phases.size(), 2u);
  EXPECT_EQ(t1.phases[0].stage, Stage::Pretrain);
  EXPECT_EQ(t1.phases[0].corpus, "public");
  EXPECT_EQ(t1.phases[0].epochs, 5u);
  EXPECT_EQ(t1.phases[1].stage, Stage::Finetune);
  EXPECT_EQ(t1.phases[1].corpus, "private");
  EXPECT_EQ(t1.phases[1].epochs, 2u);
  auto t2 = StrategyPlan::named("T2");
  EXPECT_EQ(t2.phases[0].corpus, "private");
  EXPECT_EQ(t2.phases[1].corpus, "private");
  auto t3 = StrategyPlan::named("T3");
  EXPECT_EQ(t3.phases[1].corpus, "public");
  EXPECT_THROW(StrategyPlan::named("T4"), ArgumentError);
}

TEST(TrainStage, FreezeContractsPerStep) {
  auto fx = make_fixture(2);
  auto& p = fx.m.params;
  const auto enc = hash_prefix(p, "encoder."), lm = hash_prefix(p, "lm."), proj = hash_prefix(p, "projector."),
             lora = hash_prefix(p, "lora.");

  auto s1 = StageConfig::pretrain(1);
  s1.max_steps = 1;
  EXPECT_EQ(train_stage(fx.m, fx.examples, s1, 1).steps, 1u);
  EXPECT_EQ(hash_prefix(p, "encoder."), enc);
  EXPECT_EQ(hash_prefix(p, "lm."), lm);
  EXPECT_EQ(hash_prefix(p, "lora."), lora);
  const auto proj1 = hash_prefix(p, "projector.");
  EXPECT_NE(proj1, proj);

  auto s2 = StageConfig::finetune(1);
  s2.max_steps = 1;
  train_stage(fx.m, fx.examples, s2, 2);
  EXPECT_EQ(hash_prefix(p, "encoder."), enc);
  EXPECT_EQ(hash_prefix(p, "lm."), lm);
  EXPECT_NE(hash_prefix(p, "projector."), proj1);
  EXPECT_NE(hash_prefix(p, "lora."), lora);
}

TEST(TrainStage, LossDecreasesAndIsSeeded) {
  auto a = make_fixture(4);
  auto b = make_fixture(4);
  auto cfg = StageConfig::pretrain(6);
  cfg.lr_max = 3e-3;
  auto ra = train_stage(a.m, a.examples, cfg, 7);
  auto rb = train_stage(b.m, b.examples, cfg, 7);
  EXPECT_EQ(ra.losses, rb.losses);
  ASSERT_EQ(ra.steps, 24u);
  const double head = (ra.losses[0] + ra.losses[1] + ra.losses[2] + ra.losses[3]) / 4;
  const double tail = (ra.losses[20] + ra.losses[21] + ra.losses[22] + ra.losses[23]) / 4;
  EXPECT_LT(tail, head);
}

TEST(TrainStage, Batching) {
  auto fx = make_fixture(5);
  auto cfg = StageConfig::pretrain(1);
  cfg.batch_size = 2;
  EXPECT_EQ(train_stage(fx.m, fx.examples, cfg, 1).steps, 3u);
  EXPECT_THROW(train_stage(fx.m, {}, cfg, 1), DataError);
}

TEST(Warmup, TrainsOnlyBaseLm) {
  auto fx = make_fixture(2);
  auto& p = fx.m.params;
  const auto enc = hash_prefix(p, "encoder."), lm = hash_prefix(p, "lm."), proj = hash_prefix(p, "projector.");
  LmWarmupConfig w;
  w.epochs = 2;
  std::vector<std::string> reports;
  for (const auto& r : fx.records) reports.push_back(r.report);
  auto r = warmup_lm(fx.m, reports, w, 3);
  EXPECT_EQ(r.steps, 20u);
  EXPECT_EQ(hash_prefix(p, "encoder."), enc);
  EXPECT_EQ(hash_prefix(p, "projector."), proj);
  EXPECT_NE(hash_prefix(p, "lm."), lm);
  for (const auto& e : p) EXPECT_EQ(e.frozen, e.name.rfind("projector.", 0) != 0) << e.name;
}

TEST(Evaluate, TemperatureZeroDeterministic) {
  auto fx = make_fixture(3);
  EvalConfig cfg{0.0, 12, 1};
  auto a = evaluate(fx.m, fx.examples, cfg);
  cfg.seed = 99;
  auto b = evaluate(fx.m, fx.examples, cfg);
  ASSERT_EQ(a.pairs.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.pairs[i].candidate, b.pairs[i].candidate);
  EXPECT_EQ(a.metadata.at("temperature"), "0");
}

TEST(Gradcheck, TrainableSubset) {
  auto fx = make_fixture(1);
  auto m = fx.m.cast<double>();
  randomize_lora_b(m.params, 0.02, 4);
  m.params.freeze_all_except(trainable_prefixes(Stage::Finetune));
  GradcheckOptions opts;
  opts.max_per_param = 3;
  auto r = gradcheck(m, volume::prepare(fx.records[0].volume, m.config.prep), m.config.instructions[1],
                     fx.records[0].report, opts);
  EXPECT_TRUE(r.passed()) << r.failed << " failures, max rel " << r.max_rel_error;
  std::set<std::string> names;
  for (const auto& e : r.entries) names.insert(e.param);
  EXPECT_TRUE(names.count("projector.weight"));
  EXPECT_TRUE(names.count("lora.block1.wv.A"));
  EXPECT_FALSE(names.count("lm.tok_embed"));
}

TEST(Gradcheck, ThroughEncoder) {
  auto fx = make_fixture(1);
  auto m = fx.m.cast<double>();
  m.params.freeze_all_except({"encoder.patch_embed", "projector."});
  GradcheckOptions opts;
  opts.max_per_param = 4;
  auto r = gradcheck(m, volume::prepare(fx.records[0].volume, m.config.prep), m.config.instructions[0],
                     fx.records[0].report, opts);
  EXPECT_TRUE(r.passed()) << r.failed << " failures";
  bool saw_encoder = false;
  for (const auto& e : r.entries) saw_encoder = saw_encoder || e.param.rfind("encoder.", 0) == 0;
  EXPECT_TRUE(saw_encoder);
}

TEST(Gradcheck, DetectsWrongGradient) {
  // A tolerance of zero with no absolute floor cannot be met by finite
  // differences, so the check must report failures rather than pass vacuously.
  auto fx = make_fixture(1);
  auto m = fx.m.cast<double>();
  GradcheckOptions opts;
  opts.max_per_param = 2;
  opts.rel_tol = 0.0;
  opts.abs_tol = 0.0;
  auto r = gradcheck(m, volume::prepare(fx.records[0].volume, m.config.prep), m.config.instructions[0],
                     fx.records[0].report, opts);
  EXPECT_FALSE(r.passed());
}
