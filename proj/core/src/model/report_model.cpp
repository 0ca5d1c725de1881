#include "ctgpt/model/report_model.hpp"

#include "ctgpt/tensor/ops.hpp"

namespace ctgpt::model {

void ModelConfig::validate() const {
  encoder.validate();
  if (prep.target_dims != encoder.input_dims) {
    throw ArgumentError("prep target dims must equal encoder input dims");
  }
  adapter::visual_token_count(encoder.grid(), adapter.pool_kernel);
  if (adapter.d_llm != lm.d_model) {
    throw ArgumentError("adapter d_llm (" + std::to_string(adapter.d_llm) + ") must equal lm d_model (" +
                        std::to_string(lm.d_model) + ")");
  }
  if (lm.d_model == 0 || lm.heads == 0 || lm.d_model % lm.heads != 0) {
    throw ArgumentError("lm: d_model " + std::to_string(lm.d_model) + " not divisible by heads " +
                        std::to_string(lm.heads));
  }
  lora.validate();
  if (instructions.empty()) throw ArgumentError("instruction set is empty");
  if (visual_tokens() + 4 > lm.max_seq) {
    throw ArgumentError("lm max_seq " + std::to_string(lm.max_seq) + " cannot hold " +
                        std::to_string(visual_tokens()) + " visual tokens plus a prompt");
  }
}

std::size_t ModelConfig::visual_tokens() const {
  return adapter::visual_token_count(encoder.grid(), adapter.pool_kernel);
}

ModelConfig desk_config() {
  ModelConfig c;
  c.prep.target_dims = {24, 48, 48};
  c.prep.target_spacing = {1.5, 0.75, 0.75};
  c.encoder.input_dims = {24, 48, 48};
  c.encoder.patch = {3, 6, 6};
  c.encoder.embed_dim = 64;
  c.encoder.depth = 1;
  c.encoder.heads = 4;
  c.adapter.pool_kernel = 2;
  c.adapter.d_llm = 64;
  c.lm.d_model = 64;
  c.lm.depth = 2;
  c.lm.heads = 4;
  c.lm.max_seq = 256;
  return c;
}

std::vector<std::string> prompt_texts(const ModelConfig& cfg) {
  std::vector<std::string> out{cfg.system_message};
  out.insert(out.end(), cfg.instructions.begin(), cfg.instructions.end());
  return out;
}

template <typename T>
ReportModel<T> ReportModel<T>::create(ModelConfig cfg, lm::Vocab vocab, std::uint64_t seed) {
  cfg.lm.vocab_size = vocab.size();
  cfg.validate();
  ReportModel m{std::move(cfg), std::move(vocab), {}};
  Rng enc_rng(derive_seed(seed, 1));
  Rng proj_rng(derive_seed(seed, 2));
  Rng lm_rng(derive_seed(seed, 3));
  Rng lora_rng(derive_seed(seed, 4));
  encoder::init_encoder(m.params, m.config.encoder, enc_rng);
  adapter::init_projector(m.params, m.config.encoder.embed_dim, m.config.adapter, proj_rng);
  lm::init_lm(m.params, m.config.lm, lm_rng);
  lm::attach_lora(m.params, m.config.lm, m.config.lora, lora_rng);
  return m;
}

template <typename T>
Tensor<T> ReportModel<T>::pooled_tokens(const volume::PreparedVolume& v) const {
  NoGradGuard no_grad;
  return adapter::adapt_tokens(encoder::encode(v, params, config.encoder), config.adapter.pool_kernel);
}

template <typename T>
Tensor<T> ReportModel<T>::pooled_tokens_with_graph(const volume::PreparedVolume& v) const {
  return adapter::adapt_tokens(encoder::encode(v, params, config.encoder), config.adapter.pool_kernel);
}

template <typename T>
Tensor<T> ReportModel<T>::visual_embeddings(const Tensor<T>& pooled) const {
  return adapter::project(pooled, params, config.adapter);
}

template <typename T>
Tensor<T> masked_lm_loss(const Tensor<T>& logits, std::span<const std::int64_t> ids,
                         std::span<const std::uint8_t> mask) {
  if (logits.rank() != 3 || logits.dim(0) != 1) {
    throw ArgumentError("masked_lm_loss: logits must be [1, L, V], got " + shape_str(logits.shape()));
  }
  const std::size_t len = logits.dim(1);
  if (ids.size() != len || mask.size() != len) {
    throw ArgumentError("masked_lm_loss: " + std::to_string(len) + " positions but " +
                        std::to_string(ids.size()) + " ids and " + std::to_string(mask.size()) + " mask entries");
  }
  std::vector<std::int64_t> targets(len, 0);
  std::vector<std::uint8_t> target_mask(len, 0);
  for (std::size_t t = 0; t + 1 < len; ++t) {
    if (mask[t + 1] && ids[t + 1] >= 0) {
      targets[t] = ids[t + 1];
      target_mask[t] = 1;
    }
  }
  return ops::cross_entropy(logits, targets, target_mask);
}

template <typename T>
Tensor<T> ReportModel<T>::prompt_loss(const Tensor<T>& visual, const lm::PromptSample& prompt) const {
  const auto spliced = lm::splice_targets(prompt, visual.dim(1));
  auto emb = lm::splice_embeddings<T>(prompt.token_ids, visual, params);
  auto logits = lm::forward_lm(emb, params, config.lm, &config.lora);
  return masked_lm_loss(logits, spliced.ids, spliced.mask);
}

template <typename T>
Tensor<T> ReportModel<T>::report_loss(const Tensor<T>& pooled, const std::string& instruction,
                                      const std::string& report) const {
  const auto prompt = lm::assemble_prompt(config.system_message, instruction, report, vocab, true);
  return prompt_loss(visual_embeddings(pooled), prompt);
}

template <typename T>
Tensor<T> ReportModel<T>::prompt_logits(const Tensor<T>& pooled, const std::string& instruction) const {
  NoGradGuard no_grad;
  const auto prompt = lm::assemble_prompt(config.system_message, instruction, std::nullopt, vocab, false);
  auto emb = lm::splice_embeddings<T>(prompt.token_ids, visual_embeddings(pooled), params);
  return lm::forward_lm(emb, params, config.lm, &config.lora);
}

template <typename T>
std::vector<std::int64_t> ReportModel<T>::generate_ids(const Tensor<T>& pooled, const std::string& instruction,
                                                       const lm::GenerationConfig& gen) const {
  NoGradGuard no_grad;
  const auto prompt = lm::assemble_prompt(config.system_message, instruction, std::nullopt, vocab, false);
  auto emb = lm::splice_embeddings<T>(prompt.token_ids, visual_embeddings(pooled), params);
  return lm::generate(emb, params, config.lm, &config.lora, gen);
}

template <typename T>
std::string ReportModel<T>::generate_report(const Tensor<T>& pooled, const std::string& instruction,
                                            const lm::GenerationConfig& gen) const {
  return vocab.decode(generate_ids(pooled, instruction, gen));
}

template struct ReportModel<float>;
template struct ReportModel<double>;
template Tensor<float> masked_lm_loss(const Tensor<float>&, std::span<const std::int64_t>,
                                      std::span<const std::uint8_t>);
template Tensor<double> masked_lm_loss(const Tensor<double>&, std::span<const std::int64_t>,
                                       std::span<const std::uint8_t>);

}  // namespace ctgpt::model
