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


// Command-line entry point.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure,
// 3 verification failure. Errors are reported on stderr as one human-readable
// line followed by one JSON line {"error": {...}}.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "w2vs/audio/corpus.h"
#include "w2vs/checkpoint/checkpoint.h"
#include "w2vs/common/error.h"
#include "w2vs/common/file_util.h"
#include "w2vs/common/json_reader.h"
#include "w2vs/training/pipeline.h"
#include "w2vs/training/stage.h"
#include "w2vs/verify/suite.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace w2vs {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitVerify = 3;

struct ConfigArgs {
  std::string config;
  std::string out;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void AddConfigArgs(CLI::App* cmd, ConfigArgs& args, const std::string& what) {
  cmd->add_option("config", args.config, what + " (JSON)")->required();
  cmd->add_option("-o,--out", args.out, "Output directory")->required();
  cmd->add_option("--set", args.overrides,
                  "Override a config value, e.g. --set stages.0.steps=20 (repeatable)");
  cmd->add_option("--seed", args.seed, "Root seed; replaces the config's seed");
  cmd->add_flag("-q,--quiet", args.quiet, "No progress log on stderr");
}

json LoadConfig(const ConfigArgs& args) {
  json doc = ParseJson(ReadFile(args.config), args.config);
  for (const std::string& o : args.overrides) ApplyOverride(doc, o);
  return doc;
}

fs::path BaseDir(const std::string& config) {
  return fs::absolute(fs::path(config)).parent_path();
}

std::ostream* Log(const ConfigArgs& args) { return args.quiet ? nullptr : &std::cerr; }

int RunSynth(const ConfigArgs& args) {
  const json doc = LoadConfig(args);
  JsonReader r(doc, "");
  std::uint64_t seed = 0;
  r.Get("seed", seed);
  if (args.seed) seed = *args.seed;
  JsonReader corpora = r.Object("corpora");
  std::vector<audio::CorpusSpec> specs;
  for (const auto& [name, value] : corpora.value().items()) {
    specs.push_back(training::CorpusSpecFromJson(corpora.Object(name), name,
                                                 training::CorpusSeed(seed, name)));
  }
  r.Finish();
  if (specs.empty()) throw ConfigError("corpora", "object", "no corpora to synthesise");
  for (const auto& spec : specs) {
    const fs::path manifest = audio::SynthCorpus(spec, fs::path(args.out) / spec.name);
    if (!args.quiet) std::cerr << "synth: " << spec.name << " -> " << manifest.string() << "\n";
  }
  return kExitOk;
}

int RunStageCommand(const ConfigArgs& args, training::Objective objective) {
  const training::StageSpec stage =
      training::LoadStageConfig(LoadConfig(args), BaseDir(args.config), objective, args.seed);
  const training::StageResult r = training::RunStage(stage, args.out, Log(args));
  if (!args.quiet) {
    std::cerr << ObjectiveName(objective) << ": wrote " << (fs::path(args.out) / "model.w2vs").string()
              << " (payload " << checkpoint::PayloadHash(r.checkpoint) << ")\n";
  }
  return kExitOk;
}

int RunPipelineCommand(const ConfigArgs& args) {
  const training::PipelineSpec p =
      training::PipelineSpecFromJson(LoadConfig(args), BaseDir(args.config), args.seed);
  training::RunPipeline(p, args.out, Log(args));
  if (!args.quiet) std::cerr << "pipeline: wrote " << (fs::path(args.out) / "summary.json").string() << "\n";
  return kExitOk;
}

struct SurgeryArgs {
  std::string in, out;
  std::vector<std::string> ops;
};

int RunSurgery(const SurgeryArgs& args) {
  std::vector<checkpoint::SurgeryOp> ops;
  for (const std::string& text : args.ops) {
    try {
      ops.push_back(checkpoint::ParseSurgeryOp(text));
    } catch (const Error& e) {
      throw ConfigError("--op", "surgery op", e.what());
    }
  }
  const checkpoint::Checkpoint out = checkpoint::ApplySurgery(checkpoint::Load(args.in), ops);
  checkpoint::Save(out, args.out);
  return kExitOk;
}

int RunInspect(const std::string& path, bool as_json) {
  const json report = checkpoint::InspectReport(checkpoint::Load(path));
  if (as_json) {
    std::cout << report.dump(2) << "\n";
  } else {
    std::cout << checkpoint::InspectText(report);
  }
  return kExitOk;
}

int RunDiff(const std::string& a, const std::string& b, bool as_json, bool changed_only) {
  auto diff = checkpoint::Diff(checkpoint::Load(a).model, checkpoint::Load(b).model);
  if (changed_only) diff = checkpoint::Changes(diff);
  if (as_json) {
    std::cout << checkpoint::DiffReport(diff).dump(2) << "\n";
    return kExitOk;
  }
  std::size_t width = 6;
  for (const auto& d : diff) width = std::max(width, d.name.size());
  std::cout << std::left << std::setw(static_cast<int>(width)) << "tensor"
            << "  " << std::setw(10) << "status" << "  max |delta|\n";
  for (const auto& d : diff) {
    std::cout << std::left << std::setw(static_cast<int>(width)) << d.name << "  " << std::setw(10)
              << d.status << "  ";
    if (d.status == "changed" || d.status == "unchanged") {
      std::cout << std::setprecision(6) << d.max_abs_delta;
    } else {
      std::cout << "-";
    }
    std::cout << "\n";
  }
  return kExitOk;
}

int RunVerify(std::vector<std::string> suites, const std::string& report_path) {
  if (suites.empty()) suites = verify::SuiteNames();
  std::vector<verify::CheckResult> results;
  for (const std::string& name : suites) {
    results.push_back(verify::RunSuite(name));
    const auto& r = results.back();
    std::cout << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(17) << r.name << " "
              << std::fixed << std::setprecision(2) << r.seconds << " s  " << r.detail << "\n"
              << std::flush;
  }
  const json report = verify::ReportJson(results);
  if (!report_path.empty()) WriteFileAtomic(report_path, report.dump(2) + "\n");
  const bool passed = report["passed"].get<bool>();
  std::cout << (passed ? "all suites passed" : "verification FAILED") << "\n";
  return passed ? kExitOk : kExitVerify;
}

void ReportError(const std::string& kind, const std::string& message, const std::string& path = "",
                 const std::string& expected = "") {
  std::cerr << "w2vs: " << kind << " error: " << message << "\n";
  json e = {{"kind", kind}, {"message", message}};
  if (!path.empty()) e["path"] = path;
  if (!expected.empty()) e["expected"] = expected;
  std::cerr << json{{"error", e}}.dump() << "\n";
}

int Main(int argc, char** argv) {
  CLI::App app{"Self-supervised speech model reuse toolkit: synthetic corpora, "
               "pre-training, fine-tuning, checkpoint surgery and verification."};
  app.name("w2vs");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for every subcommand and exit");
  app.set_version_flag("--version", "w2vs 1.0.0");

  ConfigArgs synth_args, pretrain_args, finetune_args, adapt_args, pipeline_args;
  CLI::App* synth = app.add_subcommand("synth", "Generate the synthetic corpora of a config");
  AddConfigArgs(synth, synth_args, "Corpus config with keys seed and corpora");
  CLI::App* pretrain = app.add_subcommand("pretrain", "Run one self-supervised pre-training stage");
  AddConfigArgs(pretrain, pretrain_args, "Stage config");
  CLI::App* finetune = app.add_subcommand("finetune", "Run one supervised fine-tuning stage");
  AddConfigArgs(finetune, finetune_args, "Stage config");
  CLI::App* adapt = app.add_subcommand("adapt", "Run one in-domain adaptation stage");
  AddConfigArgs(adapt, adapt_args, "Stage config");
  CLI::App* pipeline = app.add_subcommand("pipeline", "Run a multi-stage pipeline");
  AddConfigArgs(pipeline, pipeline_args, "Pipeline config");

  SurgeryArgs surgery_args;
  CLI::App* surgery = app.add_subcommand("surgery", "Transform a checkpoint");
  surgery->add_option("--in", surgery_args.in, "Input checkpoint")->required()->check(CLI::ExistingFile);
  surgery->add_option("--out", surgery_args.out, "Output checkpoint")->required();
  surgery->add_option("--op", surgery_args.ops,
                      "truncate:<N> | adapt_bandwidth:<first|first+fold|last|i> | "
                      "attach_head:<C> | detach_head; repeatable, applied in order")
      ->required();

  std::string inspect_path;
  bool inspect_json = false;
  CLI::App* inspect = app.add_subcommand("inspect", "Describe a checkpoint");
  inspect->add_option("checkpoint", inspect_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  inspect->add_flag("--json", inspect_json, "Print the report as JSON");

  std::string diff_a, diff_b;
  bool diff_json = false, diff_changed = false;
  CLI::App* diff = app.add_subcommand("diff", "Compare the tensors of two checkpoints");
  diff->add_option("a", diff_a, "First checkpoint")->required()->check(CLI::ExistingFile);
  diff->add_option("b", diff_b, "Second checkpoint")->required()->check(CLI::ExistingFile);
  diff->add_flag("--json", diff_json, "Print the report as JSON");
  diff->add_flag("--changed-only", diff_changed, "Omit unchanged tensors");

  std::vector<std::string> verify_suites;
  std::string verify_report;
  CLI::App* verify = app.add_subcommand("verify", "Run the built-in verification suites");
  verify->add_option("--suite", verify_suites, "Suite to run (repeatable; default all)")
      ->check(CLI::IsMember(verify::SuiteNames()));
  verify->add_option("--report", verify_report, "Write a JSON report to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    ReportError("usage", e.what());
    std::cerr << "run 'w2vs --help' for usage\n";
    return kExitConfig;
  }

  try {
    if (*synth) return RunSynth(synth_args);
    if (*pretrain) return RunStageCommand(pretrain_args, training::Objective::kPretrain);
    if (*finetune) return RunStageCommand(finetune_args, training::Objective::kFinetune);
    if (*adapt) return RunStageCommand(adapt_args, training::Objective::kAdapt);
    if (*pipeline) return RunPipelineCommand(pipeline_args);
    if (*surgery) return RunSurgery(surgery_args);
    if (*inspect) return RunInspect(inspect_path, inspect_json);
    if (*diff) return RunDiff(diff_a, diff_b, diff_json, diff_changed);
    if (*verify) return RunVerify(verify_suites, verify_report);
  } catch (const ConfigError& e) {
    ReportError("config", e.what(), e.path(), e.expected());
    return kExitConfig;
  } catch (const std::exception& e) {
    ReportError("runtime", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace
}  // namespace w2vs

int main(int argc, char** argv) { return w2vs::Main(argc, argv); }
