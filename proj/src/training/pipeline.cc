// Copyright 2026 The w2vs Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "w2vs/training/pipeline.h"

#include <map>
#include <set>
#include <sstream>

#include "w2vs/checkpoint/checkpoint.h"
#include "w2vs/common/error.h"
#include "w2vs/common/file_util.h"
#include "w2vs/encoder/spec_json.h"
#include "w2vs/numerics/rng.h"

namespace w2vs::training {

namespace {

bool StartsWith(const std::string& s, const char* prefix) {
  return s.rfind(prefix, 0) == 0;
}

bool IsReference(const std::string& s) {
  return StartsWith(s, kCorpusRef) || StartsWith(s, kStageRef);
}

std::filesystem::path ResolvePath(const std::string& text, const std::filesystem::path& base_dir) {
  if (IsReference(text)) return text;
  std::filesystem::path p(text);
  if (p.is_relative()) p = base_dir / p;
  return p.lexically_normal();
}

// Manifest lists: an array of entries, or one string whose entries are
// joined by '+'.
std::vector<std::filesystem::path> ManifestList(JsonReader& r, const std::string& key,
                                                const std::filesystem::path& base_dir) {
  std::vector<std::string> items;
  if (!r.Has(key)) {
    r.Get(key, items);
    return {};
  }
  if (r.value().at(key).is_string()) {
    std::string joined;
    r.Get(key, joined);
    std::stringstream in(joined);
    for (std::string part; std::getline(in, part, '+');) items.push_back(part);
  } else {
    r.Get(key, items);
  }
  std::vector<std::filesystem::path> out;
  for (const std::string& item : items) {
    if (item.empty()) throw ConfigError(r.PathOf(key), "", "empty manifest entry");
    out.push_back(ResolvePath(item, base_dir));
  }
  return out;
}

void ValidateName(const std::string& name, const std::string& path) {
  if (name.empty() || name == "corpora" || name == "." || name == "..") {
    throw ConfigError(path, "", "invalid name '" + name + "'");
  }
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    if (!ok) throw ConfigError(path, "", "names may only use letters, digits, '_', '-' and '.'");
  }
}

FreezePlan FreezeFromJson(JsonReader& r) {
  FreezePlan plan;
  plan.phases.clear();
  for (JsonReader phase : r.Array("freeze")) {
    FreezePhase p;
    if (phase.Has("until")) {
      std::int64_t until = 0;
      phase.Get("until", until);
      p.until_step = until;
    }
    std::string trainable;
    phase.Require("trainable", trainable);
    try {
      p.trainable = ParseTrainableSet(trainable);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(phase.PathOf("trainable"), "", e.what());
    }
    phase.Finish();
    plan.phases.push_back(p);
  }
  return plan;
}

}  // namespace

std::uint64_t CorpusSeed(std::uint64_t root_seed, const std::string& name) {
  return num::CounterRng(root_seed, "corpus").Split(name).NextU64();
}

std::uint64_t StageSeed(std::uint64_t root_seed, const std::string& name) {
  return num::CounterRng(root_seed, "stage").Split(name).NextU64();
}

audio::CorpusSpec CorpusSpecFromJson(JsonReader r, const std::string& name, std::uint64_t seed) {
  audio::CorpusSpec spec;
  spec.name = name;
  spec.seed = seed;
  r.Get("num_utterances", spec.num_utterances);
  r.Get("min_duration_s", spec.min_duration_s);
  r.Get("max_duration_s", spec.max_duration_s);
  r.Get("sample_rate", spec.sample_rate);
  if (r.Has("profile")) {
    JsonReader p = r.Object("profile");
    audio::DomainProfile& d = spec.profile;
    p.Get("num_classes", d.num_classes);
    p.Get("freq_lo_hz", d.freq_lo_hz);
    p.Get("freq_hi_hz", d.freq_hi_hz);
    p.Get("amplitude", d.amplitude);
    p.Get("noise_level", d.noise_level);
    p.Get("freq_jitter", d.freq_jitter);
    p.Get("band_limit", d.band_limit);
    p.Get("min_segment_s", d.min_segment_s);
    p.Get("max_segment_s", d.max_segment_s);
    p.Finish();
  }
  r.Finish();
  try {
    audio::ValidateCorpusSpec(spec);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(r.path(), "", e.what());
  }
  return spec;
}

StageSpec StageSpecFromJson(JsonReader r, const encoder::ModelSpec& model,
                            const std::filesystem::path& base_dir) {
  StageSpec s;
  s.model = model;
  r.Require("name", s.name);
  ValidateName(s.name, r.PathOf("name"));
  std::string objective;
  r.Require("objective", objective);
  try {
    s.objective = ParseObjective(objective);
  } catch (const Error& e) {
    throw ConfigError(r.PathOf("objective"), "", e.what());
  }

  if (r.Has("init")) {
    std::string from;
    std::vector<std::string> surgery;
    if (r.value().at("init").is_object()) {
      JsonReader init = r.Object("init");
      init.Require("from", from);
      init.Get("surgery", surgery);
      init.Finish();
    } else {
      r.Get("init", from);
    }
    s.init.from = from == "random" ? from : ResolvePath(from, base_dir).string();
    for (std::size_t i = 0; i < surgery.size(); ++i) {
      try {
        s.init.surgery.push_back(checkpoint::ParseSurgeryOp(surgery[i]));
      } catch (const Error& e) {
        throw ConfigError(r.PathOf("init") + ".surgery[" + std::to_string(i) + "]", "", e.what());
      }
    }
  }
  s.train = ManifestList(r, "train", base_dir);
  s.dev = ManifestList(r, "dev", base_dir);
  r.Get("steps", s.steps);
  r.Get("batch_size", s.batch_size);
  r.Get("eval_every", s.eval_every);
  r.Get("num_classes", s.num_classes);
  if (r.Has("freeze")) s.freeze = FreezeFromJson(r);
  if (r.Has("optimizer")) {
    JsonReader o = r.Object("optimizer");
    o.Get("lr", s.lr.peak_lr);
    o.Get("warmup", s.lr.warmup_fraction);
    o.Get("hold", s.lr.hold_fraction);
    o.Get("beta1", s.adam.beta1);
    o.Get("beta2", s.adam.beta2);
    o.Get("eps", s.adam.eps);
    o.Finish();
  }
  if (r.Has("loss")) {
    JsonReader l = r.Object("loss");
    l.Get("num_distractors", s.loss.num_distractors);
    l.Get("temperature", s.loss.temperature);
    l.Get("diversity_weight", s.loss.diversity_weight);
    l.Finish();
  }
  if (r.Has("mask")) {
    JsonReader m = r.Object("mask");
    m.Get("start_prob", s.mask.start_prob);
    m.Get("span", s.mask.span);
    m.Finish();
  }
  r.Finish();
  try {
    ValidateStageSpec(s);
  } catch (const ConfigError& e) {
    throw ConfigError(r.path().empty() ? e.path() : r.path() + "." + e.path(), e.expected(),
                      e.message());
  } catch (const Error& e) {
    throw ConfigError(r.path(), "", e.what());
  }
  return s;
}

StageSpec LoadStageConfig(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                          Objective objective, std::optional<std::uint64_t> seed) {
  if (!doc.is_object()) throw ConfigError("", "object", "stage config must be a JSON object");
  nlohmann::json stage = doc;
  encoder::ModelSpec model = encoder::ToyModelSpec();
  if (doc.contains("model")) {
    model = encoder::ModelSpecFromJson(JsonReader(doc.at("model"), "model"));
    stage.erase("model");
  }
  std::uint64_t root = 0;
  if (doc.contains("seed")) {
    root = JsonReader(doc.at("seed"), "seed").AsUint64();
    stage.erase("seed");
  }
  if (seed) root = *seed;
  if (!stage.contains("objective")) stage["objective"] = ObjectiveName(objective);
  StageSpec s = StageSpecFromJson(JsonReader(stage, ""), model, base_dir);
  if (s.objective != objective) {
    throw ConfigError("objective", "", "config declares objective '" + ObjectiveName(s.objective) +
                                           "' but the command runs '" + ObjectiveName(objective) + "'");
  }
  for (const auto& list : {s.train, s.dev}) {
    for (const auto& p : list) {
      if (IsReference(p.string())) {
        throw ConfigError("train", "", "references like '" + p.string() +
                                           "' are only valid inside a pipeline");
      }
    }
  }
  if (IsReference(s.init.from)) {
    throw ConfigError("init", "", "stage references are only valid inside a pipeline");
  }
  s.seed = root;
  return s;
}

PipelineSpec PipelineSpecFromJson(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                                  std::optional<std::uint64_t> seed) {
  JsonReader r(doc, "");
  PipelineSpec p;
  r.Get("name", p.name);
  r.Get("seed", p.seed);
  if (seed) p.seed = *seed;
  encoder::ModelSpec model = encoder::ToyModelSpec();
  if (r.Has("model")) model = encoder::ModelSpecFromJson(r.Object("model"));

  std::set<std::string> corpus_names;
  if (r.Has("corpora")) {
    JsonReader corpora = r.Object("corpora");
    for (const auto& [name, value] : corpora.value().items()) {
      ValidateName(name, corpora.PathOf(name));
      p.corpora.push_back(
          CorpusSpecFromJson(corpora.Object(name), name, CorpusSeed(p.seed, name)));
      corpus_names.insert(name);
    }
  }

  nlohmann::json defaults = nlohmann::json::object();
  if (r.Has("stage_defaults")) {
    defaults = r.Object("stage_defaults").value();
    if (defaults.contains("name")) {
      throw ConfigError("stage_defaults.name", "", "stage names cannot have a default");
    }
  }
  std::vector<JsonReader> stage_readers = r.Array("stages");
  if (stage_readers.empty()) throw ConfigError("stages", "", "pipeline has no stages");
  r.Finish();

  std::set<std::string> stage_names;
  auto check_ref = [&](const std::string& ref, const std::string& path) {
    if (StartsWith(ref, kCorpusRef) && !corpus_names.count(ref.substr(sizeof(kCorpusRef) - 1))) {
      throw ConfigError(path, "", "unknown corpus '" + ref + "'");
    }
    if (StartsWith(ref, kStageRef) && !stage_names.count(ref.substr(sizeof(kStageRef) - 1))) {
      throw ConfigError(path, "", "'" + ref + "' does not name an earlier stage");
    }
  };
  for (std::size_t i = 0; i < stage_readers.size(); ++i) {
    nlohmann::json merged = defaults;
    if (!stage_readers[i].value().is_object()) {
      throw ConfigError(stage_readers[i].path(), "object",
                        "expected object, got " + JsonTypeName(stage_readers[i].value()));
    }
    merged.update(stage_readers[i].value());
    const std::string path = "stages[" + std::to_string(i) + "]";
    StageSpec s = StageSpecFromJson(JsonReader(merged, path), model, base_dir);
    if (stage_names.count(s.name)) throw ConfigError(path + ".name", "", "duplicate stage name");
    for (const auto& m : s.train) check_ref(m.string(), path + ".train");
    for (const auto& m : s.dev) check_ref(m.string(), path + ".dev");
    if (StartsWith(s.init.from, kCorpusRef)) {
      throw ConfigError(path + ".init", "", "init must be random, a stage or a checkpoint path");
    }
    check_ref(s.init.from, path + ".init");
    s.seed = StageSeed(p.seed, s.name);
    stage_names.insert(s.name);
    p.stages.push_back(std::move(s));
  }
  return p;
}

std::vector<StageSummary> RunPipeline(const PipelineSpec& pipeline,
                                      const std::filesystem::path& run_dir, std::ostream* log) {
  std::filesystem::create_directories(run_dir);
  std::map<std::string, std::filesystem::path> corpora, outputs;
  for (const audio::CorpusSpec& c : pipeline.corpora) {
    if (log) *log << "[" << pipeline.name << "] synthesising corpus " << c.name << '\n';
    corpora[c.name] = audio::SynthCorpus(c, run_dir / "corpora" / c.name);
  }
  auto resolve = [&](const std::filesystem::path& p) -> std::filesystem::path {
    const std::string s = p.string();
    if (StartsWith(s, kCorpusRef)) return corpora.at(s.substr(sizeof(kCorpusRef) - 1));
    if (StartsWith(s, kStageRef)) return outputs.at(s.substr(sizeof(kStageRef) - 1));
    return p;
  };

  std::vector<StageSummary> summaries;
  for (StageSpec stage : pipeline.stages) {
    for (auto& m : stage.train) m = resolve(m);
    for (auto& m : stage.dev) m = resolve(m);
    if (stage.init.from != "random") stage.init.from = resolve(stage.init.from).string();
    if (log) *log << "[" << pipeline.name << "] stage " << stage.name << '\n';
    const StageResult result = RunStage(stage, run_dir / stage.name, log);
    outputs[stage.name] = run_dir / stage.name / "model.w2vs";

    StageSummary s;
    s.name = stage.name;
    s.objective = ObjectiveName(stage.objective);
    s.checkpoint = std::filesystem::path(stage.name) / "model.w2vs";
    s.payload_fnv1a64 = checkpoint::PayloadHash(result.checkpoint);
    s.final_train_loss = result.steps.back().loss;
    if (!result.evals.empty()) s.final_eval = result.evals.back();
    summaries.push_back(std::move(s));
  }
  WriteFileAtomic(run_dir / "summary.json", SummaryJson(pipeline, summaries).dump(2) + "\n");
  return summaries;
}

nlohmann::json SummaryJson(const PipelineSpec& pipeline, const std::vector<StageSummary>& stages) {
  nlohmann::json out = {{"pipeline", pipeline.name}, {"seed", pipeline.seed}};
  out["stages"] = nlohmann::json::array();
  for (const StageSummary& s : stages) {
    nlohmann::json j = {{"name", s.name},
                        {"objective", s.objective},
                        {"checkpoint", s.checkpoint.generic_string()},
                        {"payload_fnv1a64", s.payload_fnv1a64},
                        {"final_train_loss", s.final_train_loss}};
    if (s.final_eval) j["final_eval"] = s.final_eval->ToJson();
    out["stages"].push_back(j);
  }
  return out;
}

}  // namespace w2vs::training
