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

/* C interface to the CXR agent library.
 *
 * Every function returns a cxr_status; on failure cxr_last_error() holds a
 * message for the calling thread. Strings returned through char** are
 * allocated by the library and released with cxr_string_free(); float
 * buffers with cxr_floats_free(). Handles are opaque and released with their
 * _free function; passing NULL to a _free function is a no-op. */

#ifndef CXRAGENT_CXRAGENT_H_
#define CXRAGENT_CXRAGENT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CXR_API __declspec(dllexport)
#else
#define CXR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cxr_status {
  CXR_OK = 0,
  CXR_E_INVALID_ARGUMENT = 1,
  CXR_E_FORMAT = 2,
  CXR_E_CONSISTENCY = 3,
  CXR_E_DIVERGED = 4,
  CXR_E_BACKEND = 5,
  CXR_E_NOT_FOUND = 6,
  CXR_E_TIMEOUT = 7,
  CXR_E_VALIDATION = 8,
  CXR_E_REFUSAL = 9,
  CXR_E_IO = 10,
  CXR_E_OVER_LENGTH = 11,
  CXR_E_TRUNCATED = 12,
  CXR_E_INTERNAL = 99
} cxr_status;

typedef struct cxr_frame cxr_frame;
typedef struct cxr_probe cxr_probe;
typedef struct cxr_agent cxr_agent;
typedef struct cxr_eval_service cxr_eval_service;

CXR_API const char* cxr_version(void);
CXR_API const char* cxr_last_error(void);
CXR_API const char* cxr_status_name(cxr_status status);
CXR_API void cxr_string_free(char* s);
CXR_API void cxr_floats_free(float* values);

/* Embedding containers. */
CXR_API cxr_status cxr_embeddings_read(const char* path, float** values, size_t* rows,
                                       size_t* dim);
CXR_API cxr_status cxr_embeddings_decode(const void* bytes, size_t size, float** values,
                                         size_t* rows, size_t* dim);
CXR_API cxr_status cxr_embeddings_write(const char* path, const float* values, size_t rows,
                                        size_t dim);

/* Datasets: a manifest plus its embedding matrix. A NULL embeddings_path
 * uses the manifest's "embeddings" field, relative to the manifest. */
CXR_API cxr_status cxr_frame_load(const char* manifest_path, const char* embeddings_path,
                                  cxr_frame** out);
CXR_API void cxr_frame_free(cxr_frame* frame);
CXR_API cxr_status cxr_frame_shape(const cxr_frame* frame, size_t* rows, size_t* dim);
CXR_API cxr_status cxr_frame_has_declared_splits(const cxr_frame* frame, int* out);
/* split is "train", "val" or "test". */
CXR_API cxr_status cxr_frame_select_split(const cxr_frame* frame, const char* split,
                                          cxr_frame** out);
CXR_API cxr_status cxr_frame_random_split(const cxr_frame* frame, double train, double val,
                                          double test, uint64_t seed, cxr_frame** train_out,
                                          cxr_frame** val_out, cxr_frame** test_out);
/* {"rows", "dim", "label_set", "class_counts"}. */
CXR_API cxr_status cxr_frame_summary_json(const cxr_frame* frame, char** out_json);

/* Probes. config_json: {"batch_size", "epochs", "learning_rate", "seed",
 * "optimizer"}; NULL uses defaults. */
CXR_API cxr_status cxr_probe_train(const cxr_frame* frame, const char* config_json,
                                   cxr_probe** out);
/* options_json: {"space": {"batch_sizes", "epochs", "learning_rates"},
 * "metric", "seed", "optimizer", "threshold", "threads"}; NULL uses the
 * reference space. best_out may be NULL; otherwise it receives the best
 * configuration retrained on train. */
CXR_API cxr_status cxr_probe_grid_search(const cxr_frame* train, const cxr_frame* val,
                                         const char* options_json, char** result_json,
                                         char** leaderboard_text, cxr_probe** best_out);
CXR_API cxr_status cxr_probe_evaluate(const cxr_probe* probe, const cxr_frame* frame,
                                      double threshold, char** report_json);
CXR_API cxr_status cxr_probe_predict(const cxr_probe* probe, const float* embedding,
                                     size_t dim, char** detections_json);
CXR_API cxr_status cxr_probe_save(const cxr_probe* probe, const char* path);
CXR_API cxr_status cxr_probe_load(const char* path, cxr_probe** out);
CXR_API void cxr_probe_free(cxr_probe* probe);

/* Agents. */
CXR_API cxr_status cxr_agent_open(const char* config_path, cxr_agent** out);
CXR_API cxr_status cxr_agent_open_json(const char* config_json, const char* base_dir,
                                       cxr_agent** out);
CXR_API void cxr_agent_free(cxr_agent* agent);
/* user_prompt is a prompt name ("findings", "list") or literal text; NULL
 * uses the configured prompt. trace_json may be NULL. */
CXR_API cxr_status cxr_agent_run(const cxr_agent* agent, const char* image_id,
                                 const float* embedding, size_t dim, const char* user_prompt,
                                 char** report_text, char** trace_json);
CXR_API cxr_status cxr_agent_list_findings(const cxr_agent* agent, const char* image_id,
                                           const float* embedding, size_t dim,
                                           char** result_json);
CXR_API cxr_status cxr_agent_batch(const cxr_agent* agent, const cxr_frame* frame,
                                   const char* out_dir, const char* user_prompt,
                                   char** summary_json);
/* strategy is "two-option" or "position". */
CXR_API cxr_status cxr_agent_bench_localisation(const cxr_agent* agent, const char* cases_path,
                                                const char* strategy, char** report_json,
                                                char** report_text);

/* Blind evaluation. log_path may be NULL for an in-memory service. */
CXR_API cxr_status cxr_eval_open(const char* cases_path, const char* log_path,
                                 cxr_eval_service** out);
CXR_API void cxr_eval_free(cxr_eval_service* service);
/* case_ids_json: JSON array or NULL for every case. */
CXR_API cxr_status cxr_eval_create_session(cxr_eval_service* service, const char* case_ids_json,
                                           const char* rater_id, uint64_t seed,
                                           char** session_id);
CXR_API cxr_status cxr_eval_case_view(const cxr_eval_service* service, const char* session_id,
                                      size_t index, char** view_json);
CXR_API cxr_status cxr_eval_submit(cxr_eval_service* service, const char* submission_json,
                                   char** ack_json);
/* filter_json: {"dataset", "abnormal", "rater_id", "session_id"} or NULL. */
CXR_API cxr_status cxr_eval_export(const cxr_eval_service* service, const char* filter_json,
                                   int as_text, char** out);
/* Blocks serving HTTP until the process ends. port 0 picks a free port;
 * on_bound, when set, receives the bound port before serving starts. */
CXR_API cxr_status cxr_eval_serve(cxr_eval_service* service, const char* host, int port,
                                  const char* admin_token, const char* image_root,
                                  void (*on_bound)(int port, void* user), void* user);

/* Text utilities. label_set_json NULL uses the CheXpert label set;
 * synonyms_path may be NULL. */
CXR_API cxr_status cxr_extract_pathologies(const char* text, const char* label_set_json,
                                           const char* synonyms_path, char** result_json);
CXR_API cxr_status cxr_detect_temporal(const char* text, char** result_json);
CXR_API cxr_status cxr_rouge_l(const char* candidate, const char* reference, double* precision,
                               double* recall, double* f1);

/* Writes a deterministic synthetic dataset, probe, grounding fixture and
 * agent config into out_dir. */
CXR_API cxr_status cxr_fixture_synthesize(size_t cases, uint64_t seed, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif  // CXRAGENT_CXRAGENT_H_
