#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "ctgpt/lm/generate.hpp"
#include "ctgpt/lm/prompt.hpp"
#include "ctgpt/model/report_model.hpp"
#include "ctgpt/tensor/ops.hpp"

using namespace ctgpt;
using namespace ctgpt::lm;

namespace {

Vocab small_vocab() {
  std::vector<std::string> corpus{"you are helpful", "what findings do you observe in this scan",
                                  "a small nodule is seen in the upper right lung and nothing else ."};
  return Vocab::build(corpus);
}

LmConfig small_lm(std::size_t vocab) {
  LmConfig cfg;
  cfg.d_model = 16;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.vocab_size = vocab;
  cfg.max_seq = 48;
  return cfg;
}

template <typename T>
Tensor<T> random_embeddings(std::size_t L, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<T> v(L * d);
  for (auto& x : v) x = static_cast<T>(rng.normal());
  return Tensor<T>::from_data({1, L, d}, std::move(v));
}

}  // namespace

TEST(Words, SplitAndJoin) {
  EXPECT_EQ(split_words("No  acute Abnormality."), (std::vector<std::string>{"no", "acute", "abnormality", "."}));
  EXPECT_EQ(split_words("soft-tissue, 11 mm (left)"),
            (std::vector<std::string>{"soft-tissue", ",", "11", "mm", "(", "left", ")"}));
  EXPECT_EQ(normalize_text("Mass ,in the  LEFT lung ."), "mass, in the left lung.");
  EXPECT_EQ(normalize_text("( a )"), "(a)");
}

TEST(VocabTest, BuildEncodeDecode) {
  auto v = small_vocab();
  EXPECT_EQ(v.token(kPadId), "<pad>");
  EXPECT_EQ(v.id("."), kNumSpecials);
  EXPECT_EQ(v.id("a"), kNumSpecials + 1);
  const auto ids = v.encode("A small mass.");
  EXPECT_EQ(ids[2], kUnkId);
  EXPECT_EQ(v.decode(ids), "a small <unk>.");
  std::vector<std::int64_t> with_image{kBosId, v.id("you"), kImageSentinel, kStopId};
  EXPECT_EQ(v.decode(with_image), "you <image>");
  EXPECT_EQ(Vocab::from_tsv(v.to_tsv()), v);
  EXPECT_THROW(v.token(999), ArgumentError);
}

TEST(Prompt, LayoutArithmetic) {
  auto v = small_vocab();
  const std::string answer = "a small nodule is seen in the upper right lung and nothing";
  auto s = assemble_prompt("you are helpful", "what findings do you observe in this scan", answer, v, true);
  ASSERT_EQ(s.token_ids.size(), 28u);
  EXPECT_EQ(std::accumulate(s.loss_mask.begin(), s.loss_mask.end(), 0), 13);
  EXPECT_EQ(s.token_ids[0], kBosId);
  EXPECT_EQ(s.token_ids[4], kStopId);
  EXPECT_EQ(s.token_ids[5], kImageSentinel);
  EXPECT_EQ(s.token_ids[14], kStopId);
  EXPECT_EQ(s.token_ids[27], kStopId);
  for (std::size_t i = 0; i < 15; ++i) EXPECT_EQ(s.loss_mask[i], 0) << i;

  auto inf = assemble_prompt("you are helpful", "what findings do you observe in this scan", std::nullopt, v, false);
  EXPECT_EQ(inf.token_ids.size(), 15u);
  EXPECT_THROW(assemble_prompt("you", "what", std::nullopt, v, true), ArgumentError);
}

TEST(Prompt, SpliceTargets) {
  auto v = small_vocab();
  auto s = assemble_prompt("you are helpful", "what findings", std::string("a nodule"), v, true);
  auto t = splice_targets(s, 512);
  EXPECT_EQ(t.n_pre, 5u);
  EXPECT_EQ(t.n_visual, 512u);
  EXPECT_EQ(t.ids.size(), t.n_pre + 512 + t.n_post);
  EXPECT_EQ(t.ids[5], -1);
  EXPECT_EQ(t.mask[5 + 511], 0);
  EXPECT_EQ(t.ids.back(), kStopId);
}

TEST(Prompt, InstructionChoiceCoversSet) {
  Rng rng(1);
  std::set<std::string> seen;
  for (int i = 0; i < 200; ++i) seen.insert(choose_instruction(rng, default_instructions()));
  EXPECT_EQ(seen.size(), default_instructions().size());
}

TEST(Splice, SentinelChecks) {
  auto v = small_vocab();
  auto cfg = small_lm(v.size());
  ParamStore<float> store;
  Rng rng(2);
  init_lm(store, cfg, rng);
  std::vector<std::int64_t> ids{kBosId, 7, kImageSentinel, 8, kStopId};
  auto vis = Tensor<float>::zeros({1, 3, 16});
  auto e = splice_embeddings<float>(ids, vis, store);
  EXPECT_EQ(e.shape(), (Shape{1, 7, 16}));
  for (std::size_t d = 0; d < 16; ++d) EXPECT_EQ(e.at({0, 2, d}), 0.0f);
  EXPECT_EQ(e.at({0, 5, 3}), store.get("lm.tok_embed").at({8, 3}));
  EXPECT_THROW(splice_embeddings<float>(ids, std::nullopt, store), ArgumentError);
  std::vector<std::int64_t> none{kBosId, 7};
  EXPECT_THROW(splice_embeddings<float>(none, vis, store), ArgumentError);
}

TEST(ForwardLm, Causality) {
  auto cfg = small_lm(30);
  ParamStore<double> store;
  Rng rng(3);
  init_lm(store, cfg, rng);
  NoGradGuard ng;
  auto emb = random_embeddings<double>(10, 16, 4);
  const auto base = forward_lm(emb, store, cfg).vec();
  for (std::size_t j : {0u, 4u, 9u}) {
    auto moved = emb.clone();
    for (std::size_t d = 0; d < 16; ++d) moved.mutable_data()[j * 16 + d] += 0.5;
    const auto out = forward_lm(moved, store, cfg).vec();
    for (std::size_t i = 0; i < j * 30; ++i) ASSERT_EQ(out[i], base[i]) << "j=" << j << " i=" << i;
    bool changed = false;
    for (std::size_t i = j * 30; i < (j + 1) * 30; ++i) changed = changed || out[i] != base[i];
    EXPECT_TRUE(changed);
  }
  EXPECT_THROW(forward_lm(random_embeddings<double>(49, 16, 5), store, cfg), ArgumentError);
}

TEST(Lora, ZeroDeltaIsBitwiseIdentity) {
  auto cfg = small_lm(30);
  ParamStore<float> base;
  Rng rng(5);
  init_lm(base, cfg, rng);
  auto adapted = base.clone();
  LoraConfig lora;
  Rng lrng(6);
  attach_lora(adapted, cfg, lora, lrng);
  EXPECT_TRUE(has_lora(adapted));
  EXPECT_TRUE(adapted.contains("lora.block1.wv.B"));
  EXPECT_FALSE(adapted.contains("lora.block1.wk.A"));
  NoGradGuard ng;
  auto emb = random_embeddings<float>(12, 16, 7);
  EXPECT_EQ(forward_lm(emb, base, cfg).vec(), forward_lm(emb, adapted, cfg, &lora).vec());

  // A nonzero B changes the output.
  adapted.entry("lora.block0.wq.B").tensor.mutable_data()[0] = 0.5f;
  EXPECT_NE(forward_lm(emb, base, cfg).vec(), forward_lm(emb, adapted, cfg, &lora).vec());
}

TEST(Lora, ConfigValidation) {
  LoraConfig lora;
  EXPECT_DOUBLE_EQ(lora.scale(), 2.0);
  lora.targets = {"wz"};
  EXPECT_THROW(lora.validate(), ArgumentError);
  lora = {};
  lora.rank = 0;
  EXPECT_THROW(lora.validate(), ArgumentError);
}

TEST(Sampling, MonteCarloMatchesSoftmax) {
  const std::vector<double> logits{std::log(1.0), std::log(3.0)};
  Rng rng(8);
  const int draws = 100000;
  int ones = 0;
  for (int i = 0; i < draws; ++i) ones += sample_next<double>(logits, 1.0, rng) == 1;
  EXPECT_NEAR(static_cast<double>(ones) / draws, 0.75, 0.01);
}

TEST(Sampling, TemperatureZeroIsArgmax) {
  Rng rng(9);
  const std::vector<float> logits{0.5f, 2.0f, 2.0f, -1.0f};
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sample_next<float>(logits, 0.0, rng), 1);
  EXPECT_THROW(sample_next<float>(logits, -0.1, rng), ArgumentError);
}

TEST(Generate, DeterministicAndBounded) {
  auto cfg = small_lm(30);
  ParamStore<float> store;
  Rng rng(10);
  init_lm(store, cfg, rng);
  auto prefix = random_embeddings<float>(5, 16, 11);
  GenerationConfig greedy{0.0, 7, 0};
  const auto a = generate(prefix, store, cfg, nullptr, greedy);
  EXPECT_EQ(a, generate(prefix, store, cfg, nullptr, greedy));
  EXPECT_LE(a.size(), 7u);
  GenerationConfig hot{1.5, 40, 3};
  const auto b = generate(prefix, store, cfg, nullptr, hot);
  EXPECT_EQ(b, generate(prefix, store, cfg, nullptr, hot));
  EXPECT_LE(b.size() + 5, cfg.max_seq);
}

TEST(ReportModelLoss, GradientReachesVisualTokens) {
  auto mcfg = model::desk_config();
  auto texts = model::prompt_texts(mcfg);
  texts.push_back("a small nodule in the upper right region.");
  auto m = model::ReportModel<double>::create(mcfg, Vocab::build(texts), 1);
  auto visual = Tensor<double>::full({1, mcfg.visual_tokens(), mcfg.lm.d_model}, 0.1, true);
  Rng rng(12);
  for (auto& x : visual.mutable_data()) x = rng.normal(0.0, 0.1);
  auto prompt = assemble_prompt(mcfg.system_message, mcfg.instructions[0],
                                std::string("a small nodule in the upper right region."), m.vocab, true);
  m.prompt_loss(visual, prompt).backward();
  double norm = 0;
  for (double g : visual.grad()) norm += g * g;
  EXPECT_GT(norm, 0.0);
}

TEST(ReportModelLoss, MaskedLossUsesOnlySelectedTargets) {
  // 4-token answer, two of its targets masked out: the loss is the mean over
  // the remaining two next-token predictions.
  const std::size_t V = 6, L = 6;
  Rng rng(13);
  std::vector<double> lv(L * V);
  for (auto& x : lv) x = rng.normal();
  auto logits = Tensor<double>::from_data({1, L, V}, lv);
  const std::vector<std::int64_t> ids{1, 5, 2, 3, 4, 0};
  std::vector<std::uint8_t> mask{0, 0, 1, 1, 1, 1};
  const double full = model::masked_lm_loss<double>(logits, ids, mask).item();
  mask[3] = 0;
  mask[5] = 0;
  const double half = model::masked_lm_loss<double>(logits, ids, mask).item();
  auto nll = [&](std::size_t pos, std::int64_t target) {
    double z = 0;
    for (std::size_t c = 0; c < V; ++c) z += std::exp(lv[pos * V + c]);
    return std::log(z) - lv[pos * V + static_cast<std::size_t>(target)];
  };
  EXPECT_NEAR(half, (nll(1, 2) + nll(3, 4)) / 2, 1e-12);
  EXPECT_NEAR(full, (nll(1, 2) + nll(2, 3) + nll(3, 4) + nll(4, 0)) / 4, 1e-12);
}
