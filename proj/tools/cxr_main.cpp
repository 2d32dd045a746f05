// Copyright 2026 The CXR Agent Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// cxr: command-line front end over the C API. Exit status is 0 on success,
// the library status code on failure and 64 on usage errors.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cxragent/cxragent.h"

namespace {

constexpr int kUsageExit = 64;

struct CliFailure {
  cxr_status status;
};

void check(cxr_status s, const std::string& what) {
  if (s == CXR_OK) return;
  std::cerr << "cxr: " << what << ": " << cxr_status_name(s) << ": " << cxr_last_error() << "\n";
  throw CliFailure{s};
}

struct StrDeleter {
  void operator()(char* s) const { cxr_string_free(s); }
};
using CStr = std::unique_ptr<char, StrDeleter>;

struct FrameDeleter {
  void operator()(cxr_frame* f) const { cxr_frame_free(f); }
};
using Frame = std::unique_ptr<cxr_frame, FrameDeleter>;

struct ProbeDeleter {
  void operator()(cxr_probe* p) const { cxr_probe_free(p); }
};
using Probe = std::unique_ptr<cxr_probe, ProbeDeleter>;

struct AgentDeleter {
  void operator()(cxr_agent* a) const { cxr_agent_free(a); }
};
using Agent = std::unique_ptr<cxr_agent, AgentDeleter>;

struct EvalDeleter {
  void operator()(cxr_eval_service* e) const { cxr_eval_free(e); }
};
using Eval = std::unique_ptr<cxr_eval_service, EvalDeleter>;

struct Embedding {
  std::vector<float> values;
  std::size_t dim = 0;
};

// Reads one row of an embedding container; "-" reads the container from stdin.
Embedding read_embedding(const std::string& path, std::size_t row) {
  float* values = nullptr;
  std::size_t rows = 0, dim = 0;
  if (path == "-") {
    std::string bytes((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());
    check(cxr_embeddings_decode(bytes.data(), bytes.size(), &values, &rows, &dim),
          "reading embedding from stdin");
  } else {
    check(cxr_embeddings_read(path.c_str(), &values, &rows, &dim), "reading " + path);
  }
  std::unique_ptr<float, void (*)(float*)> owned(values, cxr_floats_free);
  if (row >= rows) {
    std::cerr << "cxr: embedding file has " << rows << " rows, row " << row << " requested\n";
    throw CliFailure{CXR_E_INVALID_ARGUMENT};
  }
  Embedding e;
  e.dim = dim;
  e.values.assign(values + row * dim, values + (row + 1) * dim);
  return e;
}

Frame load_frame(const std::string& manifest, const std::string& embeddings) {
  cxr_frame* f = nullptr;
  check(cxr_frame_load(manifest.c_str(), embeddings.empty() ? nullptr : embeddings.c_str(), &f),
        "loading " + manifest);
  return Frame(f);
}

Agent open_agent(const std::string& config) {
  cxr_agent* a = nullptr;
  check(cxr_agent_open(config.c_str(), &a), "loading agent config " + config);
  return Agent(a);
}

Frame select(const cxr_frame* f, const char* split) {
  cxr_frame* out = nullptr;
  check(cxr_frame_select_split(f, split, &out), std::string("selecting split ") + split);
  return Frame(out);
}

struct Partition {
  Frame train, val, test;
};

// Declared splits when the manifest has them, otherwise a seeded
// 0.75 / 0.10 / 0.15 split.
Partition partition(const cxr_frame* f, std::uint64_t seed) {
  int declared = 0;
  check(cxr_frame_has_declared_splits(f, &declared), "inspecting splits");
  if (declared) return {select(f, "train"), select(f, "val"), select(f, "test")};
  cxr_frame *t = nullptr, *v = nullptr, *s = nullptr;
  check(cxr_frame_random_split(f, 0.75, 0.10, 0.15, seed, &t, &v, &s), "splitting dataset");
  return {Frame(t), Frame(v), Frame(s)};
}

std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out + "\"";
}

void print_serving(int port, void*) {
  std::cout << "serving on port " << port << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CXR agent pipeline and evaluation workbench"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cxr_version()));

  // agent
  auto* agent = app.add_subcommand("agent", "Run the report-generation agent");
  agent->require_subcommand(1);
  std::string config, image_id, embedding_path, prompt;
  std::size_t row = 0;
  bool json_trace = false;
  auto* run = agent->add_subcommand("run", "Generate a findings section for one scan");
  run->add_option("--config", config, "Agent config (JSON)")->required();
  run->add_option("--image-id", image_id, "Scan identifier")->required();
  run->add_option("--embedding", embedding_path, "Embedding container, or - for stdin")
      ->required();
  run->add_option("--row", row, "Row of the embedding container");
  run->add_option("--prompt", prompt, "Prompt name (findings, list) or literal text");
  run->add_flag("--json-trace", json_trace, "Print the full trace as JSON");

  auto* list = agent->add_subcommand("list", "List and extract the findings for one scan");
  list->add_option("--config", config)->required();
  list->add_option("--image-id", image_id)->required();
  list->add_option("--embedding", embedding_path)->required();
  list->add_option("--row", row);

  std::string manifest, embeddings, out_dir;
  auto* batch = agent->add_subcommand("batch", "Run every scan of a manifest");
  batch->add_option("--config", config)->required();
  batch->add_option("--manifest", manifest)->required();
  batch->add_option("--embeddings", embeddings, "Defaults to the manifest's embeddings field");
  batch->add_option("--out", out_dir)->required();
  batch->add_option("--prompt", prompt);

  // probe
  auto* probe = app.add_subcommand("probe", "Train and evaluate linear probes");
  probe->require_subcommand(1);
  std::size_t batch_size = 256, epochs = 20;
  double lr = 1e-3, threshold = 0.5;
  std::uint64_t seed = 0, split_seed = 0;
  std::string optimizer = "sgd", weights_out, weights, metric = "exact_match", space, split = "test";
  unsigned threads = 0;
  bool as_json = false;

  auto* train = probe->add_subcommand("train", "Train one probe");
  train->add_option("--manifest", manifest)->required();
  train->add_option("--embeddings", embeddings);
  train->add_option("--out", weights_out, "Weights file to write")->required();
  train->add_option("--batch-size", batch_size);
  train->add_option("--epochs", epochs);
  train->add_option("--lr", lr);
  train->add_option("--seed", seed);
  train->add_option("--optimizer", optimizer)->check(CLI::IsMember({"sgd", "adam"}));
  train->add_option("--split-seed", split_seed, "Seed for the random split");
  train->add_option("--threshold", threshold);

  auto* grid = probe->add_subcommand("grid", "Grid search over training configurations");
  grid->add_option("--manifest", manifest)->required();
  grid->add_option("--embeddings", embeddings);
  grid->add_option("--space", space, "Search space JSON {batch_sizes, epochs, learning_rates}");
  grid->add_option("--metric", metric)
      ->check(CLI::IsMember({"exact_match", "single_match", "macro_auc", "top1"}));
  grid->add_option("--seed", seed);
  grid->add_option("--split-seed", split_seed);
  grid->add_option("--optimizer", optimizer)->check(CLI::IsMember({"sgd", "adam"}));
  grid->add_option("--threads", threads);
  grid->add_option("--out", weights_out, "Write the best probe here");
  grid->add_flag("--json", as_json);

  auto* eval = probe->add_subcommand("eval", "Evaluate a trained probe");
  eval->add_option("--weights", weights)->required();
  eval->add_option("--manifest", manifest)->required();
  eval->add_option("--embeddings", embeddings);
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test", "all"}));
  eval->add_option("--split-seed", split_seed);
  eval->add_option("--threshold", threshold);

  // bench
  auto* bench = app.add_subcommand("bench", "Benchmarks");
  bench->require_subcommand(1);
  std::string cases, strategy = "two-option";
  auto* loc = bench->add_subcommand("localisation", "Two-option localisation benchmark");
  loc->add_option("--config", config)->required();
  loc->add_option("--cases", cases)->required();
  loc->add_option("--strategy", strategy)->check(CLI::IsMember({"two-option", "position"}));
  loc->add_flag("--json", as_json);

  // eval service
  auto* evalsvc = app.add_subcommand("eval", "Blind clinical evaluation");
  evalsvc->require_subcommand(1);
  std::string log_path, host = "127.0.0.1", admin_token, images, dataset, rater, abnormal,
                        format = "text";
  int port = 8080;
  auto* serve = evalsvc->add_subcommand("serve", "Serve the evaluation HTTP API");
  serve->add_option("--cases", cases)->required();
  serve->add_option("--log", log_path)->required();
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--admin-token", admin_token)->envname("CXR_ADMIN_TOKEN");
  serve->add_option("--images", images, "Directory served under /images");

  auto* exp = evalsvc->add_subcommand("export", "Aggregate submitted scores");
  exp->add_option("--cases", cases)->required();
  exp->add_option("--log", log_path)->required();
  exp->add_option("--dataset", dataset)->check(CLI::IsMember({"mimic", "chexpert", "other"}));
  exp->add_option("--abnormal", abnormal)->check(CLI::IsMember({"true", "false"}));
  exp->add_option("--rater", rater);
  exp->add_option("--format", format)->check(CLI::IsMember({"text", "json"}));

  // fixtures
  auto* fixture = app.add_subcommand("fixture", "Test fixtures");
  fixture->require_subcommand(1);
  std::size_t n_cases = 100;
  auto* synth = fixture->add_subcommand("synth", "Write a synthetic dataset, probe and config");
  synth->add_option("--cases", n_cases);
  synth->add_option("--seed", seed);
  synth->add_option("--out", out_dir)->required();

  // text utilities
  auto* text = app.add_subcommand("text", "Report text utilities");
  text->require_subcommand(1);
  std::string input, synonyms, candidate, reference;
  auto* extract = text->add_subcommand("extract", "Negation-aware pathology extraction");
  extract->add_option("--text", input, "Report text, or - for stdin")->required();
  extract->add_option("--synonyms", synonyms);
  auto* rouge = text->add_subcommand("rouge", "ROUGE-L between two texts");
  rouge->add_option("--candidate", candidate)->required();
  rouge->add_option("--reference", reference)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageExit;
  }

  try {
    if (*run || *list) {
      const Agent a = open_agent(config);
      const Embedding e = read_embedding(embedding_path, row);
      char* out = nullptr;
      if (*list) {
        check(cxr_agent_list_findings(a.get(), image_id.c_str(), e.values.data(), e.dim, &out),
              "agent list");
        std::cout << CStr(out).get() << "\n";
      } else {
        char* trace = nullptr;
        check(cxr_agent_run(a.get(), image_id.c_str(), e.values.data(), e.dim,
                            prompt.empty() ? nullptr : prompt.c_str(), &out,
                            json_trace ? &trace : nullptr),
              "agent run");
        CStr report(out), tr(trace);
        std::cout << (json_trace ? tr.get() : report.get()) << "\n";
      }
    } else if (*batch) {
      const Agent a = open_agent(config);
      const Frame f = load_frame(manifest, embeddings);
      char* summary = nullptr;
      check(cxr_agent_batch(a.get(), f.get(), out_dir.c_str(),
                            prompt.empty() ? nullptr : prompt.c_str(), &summary),
            "agent batch");
      std::cout << CStr(summary).get() << "\n";
    } else if (*train) {
      const Frame f = load_frame(manifest, embeddings);
      const Partition p = partition(f.get(), split_seed);
      std::ostringstream cfg;
      cfg << "{\"batch_size\":" << batch_size << ",\"epochs\":" << epochs
          << ",\"learning_rate\":" << lr << ",\"seed\":" << seed << ",\"optimizer\":"
          << json_string(optimizer) << "}";
      cxr_probe* pr = nullptr;
      check(cxr_probe_train(p.train.get(), cfg.str().c_str(), &pr), "training");
      const Probe trained(pr);
      check(cxr_probe_save(trained.get(), weights_out.c_str()), "saving " + weights_out);
      char* report = nullptr;
      check(cxr_probe_evaluate(trained.get(), p.test.get(), threshold, &report), "evaluating");
      std::cout << CStr(report).get() << "\n";
    } else if (*grid) {
      const Frame f = load_frame(manifest, embeddings);
      const Partition p = partition(f.get(), split_seed);
      std::ostringstream opts;
      opts << "{\"metric\":" << json_string(metric) << ",\"seed\":" << seed
           << ",\"optimizer\":" << json_string(optimizer) << ",\"threads\":" << threads;
      if (!space.empty()) {
        std::ifstream in(space);
        if (!in) {
          std::cerr << "cxr: cannot read " << space << "\n";
          return CXR_E_IO;
        }
        opts << ",\"space\":" << std::string(std::istreambuf_iterator<char>(in), {});
      }
      opts << "}";
      char *result = nullptr, *table = nullptr;
      cxr_probe* best = nullptr;
      check(cxr_probe_grid_search(p.train.get(), p.val.get(), opts.str().c_str(), &result, &table,
                                  weights_out.empty() ? nullptr : &best),
            "grid search");
      CStr r(result), t(table);
      const Probe b(best);
      if (b) check(cxr_probe_save(b.get(), weights_out.c_str()), "saving " + weights_out);
      std::cout << (as_json ? r.get() : t.get()) << "\n";
    } else if (*eval) {
      cxr_probe* pr = nullptr;
      check(cxr_probe_load(weights.c_str(), &pr), "loading " + weights);
      const Probe loaded(pr);
      const Frame f = load_frame(manifest, embeddings);
      Frame picked;
      const cxr_frame* target = f.get();
      if (split != "all") {
        Partition p = partition(f.get(), split_seed);
        picked = std::move(split == "train" ? p.train : split == "val" ? p.val : p.test);
        target = picked.get();
      }
      char* report = nullptr;
      check(cxr_probe_evaluate(loaded.get(), target, threshold, &report), "evaluating");
      std::cout << CStr(report).get() << "\n";
    } else if (*loc) {
      const Agent a = open_agent(config);
      char *j = nullptr, *t = nullptr;
      check(cxr_agent_bench_localisation(a.get(), cases.c_str(), strategy.c_str(), &j, &t),
            "localisation benchmark");
      CStr js(j), ts(t);
      std::cout << (as_json ? js.get() : ts.get()) << "\n";
    } else if (*serve) {
      cxr_eval_service* svc = nullptr;
      check(cxr_eval_open(cases.c_str(), log_path.c_str(), &svc), "opening evaluation");
      const Eval e(svc);
      check(cxr_eval_serve(e.get(), host.c_str(), port, admin_token.c_str(), images.c_str(),
                           print_serving, nullptr),
            "serving");
    } else if (*exp) {
      cxr_eval_service* svc = nullptr;
      check(cxr_eval_open(cases.c_str(), log_path.c_str(), &svc), "opening evaluation");
      const Eval e(svc);
      std::ostringstream filter;
      filter << "{";
      const char* sep = "";
      if (!dataset.empty()) {
        filter << "\"dataset\":" << json_string(dataset);
        sep = ",";
      }
      if (!abnormal.empty()) {
        filter << sep << "\"abnormal\":" << abnormal;
        sep = ",";
      }
      if (!rater.empty()) filter << sep << "\"rater_id\":" << json_string(rater);
      filter << "}";
      char* out = nullptr;
      check(cxr_eval_export(e.get(), filter.str().c_str(), format == "text", &out), "export");
      std::cout << CStr(out).get() << "\n";
    } else if (*synth) {
      check(cxr_fixture_synthesize(n_cases, seed, out_dir.c_str()), "synthesizing fixture");
      std::cout << "wrote synthetic fixture to " << out_dir << "\n";
    } else if (*extract) {
      if (input == "-")
        input.assign(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
      char* out = nullptr;
      check(cxr_extract_pathologies(input.c_str(), nullptr,
                                    synonyms.empty() ? nullptr : synonyms.c_str(), &out),
            "extraction");
      std::cout << CStr(out).get() << "\n";
    } else if (*rouge) {
      double p = 0, r = 0, f = 0;
      check(cxr_rouge_l(candidate.c_str(), reference.c_str(), &p, &r, &f), "rouge");
      std::printf("precision %.6f\nrecall    %.6f\nf1        %.6f\n", p, r, f);
    }
  } catch (const CliFailure& f) {
    return static_cast<int>(f.status);
  }
  return 0;
}
