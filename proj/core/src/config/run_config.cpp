#include "ctgpt/config/run_config.hpp"

#include <nlohmann/json.hpp>

#include "../common/binary_io.hpp"

namespace ctgpt::config {
namespace {

using nlohmann::json;

template <typename V>
void read(const json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

template <std::size_t N>
void read_array(const json& j, const char* key, std::array<std::size_t, N>& out) {
  if (!j.contains(key)) return;
  const auto v = j.at(key).get<std::vector<std::size_t>>();
  if (v.size() != N) throw ConfigError(std::string(key) + ": expected " + std::to_string(N) + " values");
  std::copy(v.begin(), v.end(), out.begin());
}

void read_spacing(const json& j, const char* key, volume::Spacing3& out) {
  if (!j.contains(key)) return;
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 3) throw ConfigError(std::string(key) + ": expected 3 values");
  std::copy(v.begin(), v.end(), out.begin());
}

void read_stage(const json& j, train::StageConfig& s) {
  read(j, "lr", s.lr_max);
  read(j, "epochs", s.epochs);
  read(j, "batch_size", s.batch_size);
  read(j, "warmup_fraction", s.warmup_fraction);
  read(j, "clip_norm", s.clip_norm);
  read(j, "max_steps", s.max_steps);
  read(j, "random_instruction", s.random_instruction);
  read(j, "beta1", s.adam.beta1);
  read(j, "beta2", s.adam.beta2);
  read(j, "eps", s.adam.eps);
}

json stage_json(const train::StageConfig& s) {
  return {{"lr", s.lr_max},
          {"epochs", s.epochs},
          {"batch_size", s.batch_size},
          {"warmup_fraction", s.warmup_fraction},
          {"clip_norm", s.clip_norm},
          {"max_steps", s.max_steps},
          {"random_instruction", s.random_instruction},
          {"beta1", s.adam.beta1},
          {"beta2", s.adam.beta2},
          {"eps", s.adam.eps}};
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  auto& m = c.model;
  try {
    if (j.contains("volume")) {
      const auto& v = j.at("volume");
      read_array(v, "dims", m.prep.target_dims);
      m.encoder.input_dims = m.prep.target_dims;
      read_spacing(v, "spacing_mm", m.prep.target_spacing);
      if (v.contains("clip_hu")) {
        const auto clip = v.at("clip_hu").get<std::vector<float>>();
        if (clip.size() != 2) throw ConfigError("volume.clip_hu: expected [lo, hi]");
        m.prep.clip_min = clip[0];
        m.prep.clip_max = clip[1];
      }
    }
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      read_array(e, "patch", m.encoder.patch);
      read(e, "embed_dim", m.encoder.embed_dim);
      read(e, "depth", m.encoder.depth);
      read(e, "heads", m.encoder.heads);
      read(e, "mlp_ratio", m.encoder.mlp_ratio);
    }
    if (j.contains("adapter")) {
      const auto& a = j.at("adapter");
      read(a, "pool_kernel", m.adapter.pool_kernel);
      if (a.contains("projector")) m.adapter.projector = adapter::parse_projector_kind(a.at("projector").get<std::string>());
      read(a, "bias", m.adapter.bias);
    }
    if (j.contains("lm")) {
      const auto& l = j.at("lm");
      read(l, "d_model", m.lm.d_model);
      read(l, "depth", m.lm.depth);
      read(l, "heads", m.lm.heads);
      read(l, "max_seq", m.lm.max_seq);
      read(l, "mlp_ratio", m.lm.mlp_ratio);
    }
    m.adapter.d_llm = m.lm.d_model;
    if (j.contains("lora")) {
      const auto& l = j.at("lora");
      read(l, "rank", m.lora.rank);
      read(l, "alpha", m.lora.alpha);
      if (l.contains("targets")) {
        const auto t = l.at("targets").get<std::vector<std::string>>();
        m.lora.targets = {t.begin(), t.end()};
      }
    }
    if (j.contains("prompt")) {
      const auto& p = j.at("prompt");
      read(p, "system_message", m.system_message);
      read(p, "instructions", m.instructions);
    }
    if (j.contains("lm_warmup")) {
      const auto& w = j.at("lm_warmup");
      read(w, "epochs", c.lm_warmup.epochs);
      read(w, "lr", c.lm_warmup.lr_max);
      read(w, "warmup_fraction", c.lm_warmup.warmup_fraction);
      read(w, "clip_norm", c.lm_warmup.clip_norm);
      read(w, "keep_prob", c.lm_warmup.keep_prob);
      read(w, "random_keep", c.lm_warmup.random_keep);
      read(w, "group_words", c.lm_warmup.group_words);
      if (w.contains("slot")) {
        const auto s = w.at("slot").get<std::string>();
        if (s == "zeros") {
          c.lm_warmup.slot = train::WarmupSlot::Zeros;
        } else if (s == "keywords") {
          c.lm_warmup.slot = train::WarmupSlot::Keywords;
        } else {
          throw ConfigError("lm_warmup.slot: expected zeros or keywords, got '" + s + "'");
        }
      }
    }
    if (j.contains("pretrain")) read_stage(j.at("pretrain"), c.pretrain);
    if (j.contains("finetune")) read_stage(j.at("finetune"), c.finetune);
    c.pretrain.stage = train::Stage::Pretrain;
    c.finetune.stage = train::Stage::Finetune;
    if (j.contains("strategy")) {
      const auto& s = j.at("strategy");
      read(s, "plan", c.plan);
      read(s, "eval_corpus", c.eval_corpus);
      read(s, "eval_split", c.eval_split);
    }
    if (j.contains("generation")) {
      const auto& g = j.at("generation");
      read(g, "temperature", c.temperature);
      read(g, "max_new", c.max_new);
      read(g, "sweep", c.sweep_temperatures);
    }
    if (j.contains("corpora")) {
      for (const auto& [name, path] : j.at("corpora").items()) c.corpora[name] = path.get<std::string>();
    }
    read(j, "seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(detail::read_file(path.string()));
}

void RunConfig::validate() const {
  try {
    auto probe = model;
    probe.lm.vocab_size = lm::kNumSpecials + 1;
    probe.validate();
    probe.lm.validate();
    pretrain.validate();
    finetune.validate();
    train::StrategyPlan::named(plan);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  if (model.prep.clip_min >= model.prep.clip_max) throw ConfigError("volume.clip_hu: lo must be < hi");
  for (double s : model.prep.target_spacing) {
    if (!(s > 0.0)) throw ConfigError("volume.spacing_mm: spacings must be > 0");
  }
  if (eval_split != "train" && eval_split != "val" && eval_split != "test") {
    throw ConfigError("strategy.eval_split must be train, val or test");
  }
  if (!(temperature >= 0.0)) throw ConfigError("generation.temperature must be >= 0");
  if (max_new == 0) throw ConfigError("generation.max_new must be >= 1");
  for (double t : sweep_temperatures) {
    if (!(t >= 0.0)) throw ConfigError("generation.sweep temperatures must be >= 0");
  }
  if (lm_warmup.keep_prob <= 0.0 || lm_warmup.keep_prob > 1.0) throw ConfigError("lm_warmup.keep_prob must be in (0, 1]");
}

std::string RunConfig::to_json() const {
  const auto& m = model;
  json j;
  j["volume"] = {{"dims", m.prep.target_dims},
                 {"spacing_mm", m.prep.target_spacing},
                 {"clip_hu", {m.prep.clip_min, m.prep.clip_max}}};
  j["encoder"] = {{"patch", m.encoder.patch},
                  {"embed_dim", m.encoder.embed_dim},
                  {"depth", m.encoder.depth},
                  {"heads", m.encoder.heads},
                  {"mlp_ratio", m.encoder.mlp_ratio}};
  j["adapter"] = {{"pool_kernel", m.adapter.pool_kernel},
                  {"projector", adapter::to_string(m.adapter.projector)},
                  {"bias", m.adapter.bias}};
  j["lm"] = {{"d_model", m.lm.d_model},
             {"depth", m.lm.depth},
             {"heads", m.lm.heads},
             {"max_seq", m.lm.max_seq},
             {"mlp_ratio", m.lm.mlp_ratio}};
  j["lora"] = {{"rank", m.lora.rank},
               {"alpha", m.lora.alpha},
               {"targets", std::vector<std::string>(m.lora.targets.begin(), m.lora.targets.end())}};
  j["prompt"] = {{"system_message", m.system_message}, {"instructions", m.instructions}};
  j["lm_warmup"] = {{"epochs", lm_warmup.epochs},
                    {"lr", lm_warmup.lr_max},
                    {"warmup_fraction", lm_warmup.warmup_fraction},
                    {"clip_norm", lm_warmup.clip_norm},
                    {"slot", lm_warmup.slot == train::WarmupSlot::Zeros ? "zeros" : "keywords"},
                    {"keep_prob", lm_warmup.keep_prob},
                    {"random_keep", lm_warmup.random_keep},
                    {"group_words", lm_warmup.group_words}};
  j["pretrain"] = stage_json(pretrain);
  j["finetune"] = stage_json(finetune);
  j["strategy"] = {{"plan", plan}, {"eval_corpus", eval_corpus}, {"eval_split", eval_split}};
  j["generation"] = {{"temperature", temperature}, {"max_new", max_new}, {"sweep", sweep_temperatures}};
  json corp = json::object();
  for (const auto& [name, path] : corpora) corp[name] = path.string();
  j["corpora"] = corp;
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

std::uint64_t RunConfig::hash() const { return fnv1a(to_json()); }

}  // namespace ctgpt::config
