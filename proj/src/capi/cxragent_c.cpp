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

#include "cxragent/cxragent.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "core/embedding_store.hpp"
#include "core/error.hpp"
#include "core/eval_http.hpp"
#include "core/eval_service.hpp"
#include "core/linear_probe.hpp"
#include "core/metrics.hpp"
#include "core/pipeline.hpp"
#include "core/report_text.hpp"
#include "core/util.hpp"

using nlohmann::json;

struct cxr_frame {
  cxr::EmbeddingFrame frame;
};

struct cxr_probe {
  cxr::ProbeWeights weights;
};

struct cxr_agent {
  cxr::Agent agent;
};

struct cxr_eval_service {
  std::unique_ptr<cxr::EvalService> service;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
cxr_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return CXR_OK;
  } catch (const cxr::Error& e) {
    g_last_error = e.what();
    return static_cast<cxr_status>(e.code());
  } catch (const json::exception& e) {
    g_last_error = std::string("json: ") + e.what();
    return CXR_E_FORMAT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CXR_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CXR_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return CXR_E_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void put_string(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

void need(const void* p, const char* what) {
  if (!p) cxr::fail(cxr::ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

json parse_or_empty(const char* text) {
  if (!text || !*text) return json::object();
  return json::parse(text);
}

void export_floats(const cxr::EmbeddingMatrix& m, float** values, size_t* rows, size_t* dim) {
  need(values, "values");
  need(rows, "rows");
  need(dim, "dim");
  float* buf = static_cast<float*>(std::malloc(std::max<size_t>(1, m.values().size()) * sizeof(float)));
  if (!buf) throw std::bad_alloc();
  std::memcpy(buf, m.values().data(), m.values().size() * sizeof(float));
  *values = buf;
  *rows = m.rows();
  *dim = m.dim();
}

cxr::Split split_or_throw(const char* s) {
  need(s, "split");
  return cxr::parse_split(s);
}

}  // namespace

extern "C" {

const char* cxr_version(void) { return "1.0.0"; }

const char* cxr_last_error(void) { return g_last_error.c_str(); }

const char* cxr_status_name(cxr_status status) {
  if (status == CXR_OK) return "ok";
  return cxr::error_code_name(static_cast<cxr::ErrorCode>(status));
}

void cxr_string_free(char* s) { std::free(s); }

void cxr_floats_free(float* values) { std::free(values); }

cxr_status cxr_embeddings_read(const char* path, float** values, size_t* rows, size_t* dim) {
  return guarded([&] {
    need(path, "path");
    export_floats(cxr::read_embeddings(path), values, rows, dim);
  });
}

cxr_status cxr_embeddings_decode(const void* bytes, size_t size, float** values, size_t* rows,
                                 size_t* dim) {
  return guarded([&] {
    need(bytes, "bytes");
    export_floats(cxr::decode_embeddings({static_cast<const char*>(bytes), size}), values, rows,
                  dim);
  });
}

cxr_status cxr_embeddings_write(const char* path, const float* values, size_t rows, size_t dim) {
  return guarded([&] {
    need(path, "path");
    need(values, "values");
    cxr::write_embeddings(path,
                          cxr::EmbeddingMatrix(rows, dim, std::vector<float>(values, values + rows * dim)));
  });
}

cxr_status cxr_frame_load(const char* manifest_path, const char* embeddings_path,
                          cxr_frame** out) {
  return guarded([&] {
    need(manifest_path, "manifest_path");
    need(out, "out");
    std::filesystem::path emb;
    if (embeddings_path && *embeddings_path) {
      emb = embeddings_path;
    } else {
      const json j = json::parse(cxr::read_file(manifest_path));
      if (!j.contains("embeddings"))
        cxr::fail(cxr::ErrorCode::kInvalidArgument,
                  "manifest has no \"embeddings\" field; pass the embedding file explicitly");
      emb = j["embeddings"].get<std::string>();
      if (emb.is_relative()) emb = std::filesystem::path(manifest_path).parent_path() / emb;
    }
    *out = new cxr_frame{cxr::load_frame(manifest_path, emb)};
  });
}

void cxr_frame_free(cxr_frame* frame) { delete frame; }

cxr_status cxr_frame_shape(const cxr_frame* frame, size_t* rows, size_t* dim) {
  return guarded([&] {
    need(frame, "frame");
    if (rows) *rows = frame->frame.rows();
    if (dim) *dim = frame->frame.dim();
  });
}

cxr_status cxr_frame_has_declared_splits(const cxr_frame* frame, int* out) {
  return guarded([&] {
    need(frame, "frame");
    need(out, "out");
    *out = frame->frame.has_declared_splits() ? 1 : 0;
  });
}

cxr_status cxr_frame_select_split(const cxr_frame* frame, const char* split, cxr_frame** out) {
  return guarded([&] {
    need(frame, "frame");
    need(out, "out");
    *out = new cxr_frame{frame->frame.rows_in_split(split_or_throw(split))};
  });
}

cxr_status cxr_frame_random_split(const cxr_frame* frame, double train, double val, double test,
                                  uint64_t seed, cxr_frame** train_out, cxr_frame** val_out,
                                  cxr_frame** test_out) {
  return guarded([&] {
    need(frame, "frame");
    need(train_out, "train_out");
    need(val_out, "val_out");
    need(test_out, "test_out");
    auto parts = cxr::split_frame(frame->frame, cxr::SplitFractions{train, val, test}, seed);
    auto t = std::make_unique<cxr_frame>(cxr_frame{std::move(parts.train)});
    auto v = std::make_unique<cxr_frame>(cxr_frame{std::move(parts.val)});
    auto s = std::make_unique<cxr_frame>(cxr_frame{std::move(parts.test)});
    *train_out = t.release();
    *val_out = v.release();
    *test_out = s.release();
  });
}

cxr_status cxr_frame_summary_json(const cxr_frame* frame, char** out_json) {
  return guarded([&] {
    need(frame, "frame");
    need(out_json, "out_json");
    const auto counts = cxr::class_counts(frame->frame);
    const json j{{"rows", frame->frame.rows()},
                 {"dim", frame->frame.dim()},
                 {"fingerprint", frame->frame.fingerprint()},
                 {"label_set", cxr::label_set_to_json(frame->frame.label_set())},
                 {"class_counts",
                  {{"positives", counts.positives},
                   {"no_finding_cases", counts.no_finding_cases},
                   {"total", counts.total}}}};
    *out_json = dup_string(j.dump(2));
  });
}

cxr_status cxr_probe_train(const cxr_frame* frame, const char* config_json, cxr_probe** out) {
  return guarded([&] {
    need(frame, "frame");
    need(out, "out");
    const auto config = cxr::train_config_from_json(parse_or_empty(config_json));
    *out = new cxr_probe{cxr::train(frame->frame, config)};
  });
}

cxr_status cxr_probe_grid_search(const cxr_frame* train, const cxr_frame* val,
                                 const char* options_json, char** result_json,
                                 char** leaderboard_text, cxr_probe** best_out) {
  return guarded([&] {
    need(train, "train");
    need(val, "val");
    const json o = parse_or_empty(options_json);
    const auto space = o.contains("space") ? cxr::grid_space_from_json(o["space"])
                                           : cxr::GridSearchSpace::reference();
    const auto metric = cxr::parse_selection_metric(o.value("metric", std::string("exact_match")));
    const auto optimizer = cxr::parse_optimizer(o.value("optimizer", std::string("sgd")));
    const auto result = cxr::grid_search(train->frame, val->frame, space, metric,
                                         o.value("seed", std::uint64_t{0}), optimizer,
                                         o.value("threshold", cxr::kDefaultDecisionThreshold),
                                         o.value("threads", 0u));
    std::unique_ptr<cxr_probe> best;
    if (best_out) best = std::make_unique<cxr_probe>(cxr_probe{cxr::train(train->frame, result.best)});
    put_string(result_json, cxr::to_json(result).dump(2));
    put_string(leaderboard_text, cxr::leaderboard_table(result));
    if (best_out) *best_out = best.release();
  });
}

cxr_status cxr_probe_evaluate(const cxr_probe* probe, const cxr_frame* frame, double threshold,
                              char** report_json) {
  return guarded([&] {
    need(probe, "probe");
    need(frame, "frame");
    need(report_json, "report_json");
    if (probe->weights.label_set->labels() != frame->frame.label_set().labels())
      cxr::fail(cxr::ErrorCode::kConsistency, "probe and dataset label sets differ");
    *report_json =
        dup_string(cxr::to_json(cxr::evaluate_probe(probe->weights, frame->frame, threshold)).dump(2));
  });
}

cxr_status cxr_probe_predict(const cxr_probe* probe, const float* embedding, size_t dim,
                             char** detections_json) {
  return guarded([&] {
    need(probe, "probe");
    need(embedding, "embedding");
    need(detections_json, "detections_json");
    const auto d = cxr::predict(probe->weights, std::span<const float>(embedding, dim));
    json j = json::object();
    for (std::size_t i = 0; i < d.label_set().size(); ++i)
      j[d.label_set().labels()[i]] = d.scores()[i];
    *detections_json = dup_string(j.dump(2));
  });
}

cxr_status cxr_probe_save(const cxr_probe* probe, const char* path) {
  return guarded([&] {
    need(probe, "probe");
    need(path, "path");
    cxr::save_weights(path, probe->weights);
  });
}

cxr_status cxr_probe_load(const char* path, cxr_probe** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new cxr_probe{cxr::load_weights(path)};
  });
}

void cxr_probe_free(cxr_probe* probe) { delete probe; }

cxr_status cxr_agent_open(const char* config_path, cxr_agent** out) {
  return guarded([&] {
    need(config_path, "config_path");
    need(out, "out");
    *out = new cxr_agent{cxr::Agent::from_config(cxr::load_agent_config(config_path))};
  });
}

cxr_status cxr_agent_open_json(const char* config_json, const char* base_dir, cxr_agent** out) {
  return guarded([&] {
    need(config_json, "config_json");
    need(out, "out");
    const auto config =
        cxr::agent_config_from_json(json::parse(config_json), base_dir ? base_dir : "");
    *out = new cxr_agent{cxr::Agent::from_config(config)};
  });
}

void cxr_agent_free(cxr_agent* agent) { delete agent; }

cxr_status cxr_agent_run(const cxr_agent* agent, const char* image_id, const float* embedding,
                         size_t dim, const char* user_prompt, char** report_text,
                         char** trace_json) {
  return guarded([&] {
    need(agent, "agent");
    need(image_id, "image_id");
    need(embedding, "embedding");
    const std::string prompt = user_prompt ? user_prompt : agent->agent.config().user_prompt;
    const auto t = agent->agent.run_findings(image_id, {embedding, dim}, prompt);
    std::string trace = trace_json ? cxr::to_json(t).dump(2) : std::string{};
    put_string(report_text, t.report->text);
    put_string(trace_json, trace);
  });
}

cxr_status cxr_agent_list_findings(const cxr_agent* agent, const char* image_id,
                                   const float* embedding, size_t dim, char** result_json) {
  return guarded([&] {
    need(agent, "agent");
    need(image_id, "image_id");
    need(embedding, "embedding");
    need(result_json, "result_json");
    const auto run = agent->agent.run_detection_listing(image_id, {embedding, dim});
    const json j{{"extraction", cxr::to_json(run.extraction)}, {"trace", cxr::to_json(run.trace)}};
    *result_json = dup_string(j.dump(2));
  });
}

cxr_status cxr_agent_batch(const cxr_agent* agent, const cxr_frame* frame, const char* out_dir,
                           const char* user_prompt, char** summary_json) {
  return guarded([&] {
    need(agent, "agent");
    need(frame, "frame");
    need(out_dir, "out_dir");
    const std::string prompt = user_prompt ? user_prompt : agent->agent.config().user_prompt;
    const auto s = cxr::run_batch(agent->agent, frame->frame, out_dir, prompt);
    put_string(summary_json, cxr::to_json(s).dump(2));
  });
}

cxr_status cxr_agent_bench_localisation(const cxr_agent* agent, const char* cases_path,
                                        const char* strategy, char** report_json,
                                        char** report_text) {
  return guarded([&] {
    need(agent, "agent");
    need(cases_path, "cases_path");
    need(strategy, "strategy");
    const auto r = agent->agent.run_localisation_benchmark(
        cxr::load_localisation_cases(cases_path), cxr::parse_localisation_strategy(strategy));
    std::string j = cxr::to_json(r).dump(2);
    std::string t = cxr::localisation_table(r);
    put_string(report_json, j);
    put_string(report_text, t);
  });
}

cxr_status cxr_eval_open(const char* cases_path, const char* log_path, cxr_eval_service** out) {
  return guarded([&] {
    need(cases_path, "cases_path");
    need(out, "out");
    auto svc = std::make_unique<cxr::EvalService>(cxr::load_evaluation_cases(cases_path),
                                                  log_path ? log_path : "");
    *out = new cxr_eval_service{std::move(svc)};
  });
}

void cxr_eval_free(cxr_eval_service* service) { delete service; }

cxr_status cxr_eval_create_session(cxr_eval_service* service, const char* case_ids_json,
                                   const char* rater_id, uint64_t seed, char** session_id) {
  return guarded([&] {
    need(service, "service");
    need(rater_id, "rater_id");
    need(session_id, "session_id");
    std::vector<std::string> ids;
    if (case_ids_json && *case_ids_json)
      ids = json::parse(case_ids_json).get<std::vector<std::string>>();
    *session_id = dup_string(service->service->create_session(ids, rater_id, seed).session_id);
  });
}

cxr_status cxr_eval_case_view(const cxr_eval_service* service, const char* session_id,
                              size_t index, char** view_json) {
  return guarded([&] {
    need(service, "service");
    need(session_id, "session_id");
    need(view_json, "view_json");
    *view_json = dup_string(cxr::to_json(service->service->case_view(session_id, index)).dump(2));
  });
}

cxr_status cxr_eval_submit(cxr_eval_service* service, const char* submission_json,
                           char** ack_json) {
  return guarded([&] {
    need(service, "service");
    need(submission_json, "submission_json");
    const auto ack =
        service->service->submit(cxr::submission_from_json(json::parse(submission_json)));
    put_string(ack_json, json{{"session_id", ack.session_id},
                              {"case_id", ack.case_id},
                              {"submitted_at", ack.submitted_at},
                              {"replaced", ack.replaced}}
                             .dump(2));
  });
}

cxr_status cxr_eval_export(const cxr_eval_service* service, const char* filter_json, int as_text,
                           char** out) {
  return guarded([&] {
    need(service, "service");
    need(out, "out");
    const json f = parse_or_empty(filter_json);
    cxr::ResultsFilter filter;
    if (f.contains("dataset") && !f["dataset"].is_null())
      filter.dataset = cxr::parse_dataset_tag(f["dataset"].get<std::string>());
    if (f.contains("abnormal") && !f["abnormal"].is_null())
      filter.abnormal = f["abnormal"].get<bool>();
    if (f.contains("rater_id") && !f["rater_id"].is_null())
      filter.rater_id = f["rater_id"].get<std::string>();
    if (f.contains("session_id") && !f["session_id"].is_null())
      filter.session_id = f["session_id"].get<std::string>();
    const auto r = service->service->export_results(filter);
    *out = dup_string(as_text ? cxr::results_table(r) : cxr::to_json(r).dump(2));
  });
}

cxr_status cxr_eval_serve(cxr_eval_service* service, const char* host, int port,
                          const char* admin_token, const char* image_root,
                          void (*on_bound)(int port, void* user), void* user) {
  return guarded([&] {
    need(service, "service");
    cxr::EvalServerOptions options;
    if (host && *host) options.host = host;
    options.port = port;
    if (admin_token) options.admin_token = admin_token;
    if (image_root && *image_root) options.image_root = image_root;
    cxr::EvalHttpServer server(*service->service, options);
    const int bound = server.bind();
    if (on_bound) on_bound(bound, user);
    server.serve();
  });
}

cxr_status cxr_extract_pathologies(const char* text, const char* label_set_json,
                                   const char* synonyms_path, char** result_json) {
  return guarded([&] {
    need(text, "text");
    need(result_json, "result_json");
    const cxr::LabelSet labels = label_set_json && *label_set_json
                                     ? cxr::label_set_from_json(json::parse(label_set_json))
                                     : cxr::chexpert_label_set();
    cxr::SynonymTable synonyms;
    if (synonyms_path && *synonyms_path) synonyms = cxr::load_synonyms(synonyms_path);
    *result_json = dup_string(cxr::to_json(cxr::extract_pathologies(text, labels, synonyms)).dump(2));
  });
}

cxr_status cxr_detect_temporal(const char* text, char** result_json) {
  return guarded([&] {
    need(text, "text");
    need(result_json, "result_json");
    *result_json = dup_string(cxr::to_json(cxr::detect_temporal_language(text)).dump(2));
  });
}

cxr_status cxr_rouge_l(const char* candidate, const char* reference, double* precision,
                       double* recall, double* f1) {
  return guarded([&] {
    need(candidate, "candidate");
    need(reference, "reference");
    const auto r = cxr::rouge_l(candidate, reference);
    if (precision) *precision = r.precision;
    if (recall) *recall = r.recall;
    if (f1) *f1 = r.f1;
  });
}

cxr_status cxr_fixture_synthesize(size_t cases, uint64_t seed, const char* out_dir) {
  return guarded([&] {
    need(out_dir, "out_dir");
    cxr::write_synthetic_world(cxr::synthesize_world(cases, seed), out_dir);
  });
}

}  // extern "C"
