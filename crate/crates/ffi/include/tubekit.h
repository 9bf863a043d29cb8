#ifndef TUBEKIT_H
#define TUBEKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TkStatus {
  TK_STATUS_OK = 0,
  TK_STATUS_NULL_POINTER = 1,
  TK_STATUS_INVALID_INPUT = 2,
  TK_STATUS_IO = 3,
  TK_STATUS_PARSE = 4,
  TK_STATUS_NO_FEASIBLE_PATH = 5,
  TK_STATUS_TRAINING = 6,
  TK_STATUS_OUT_OF_RANGE = 7,
  TK_STATUS_PANIC = 8,
} TkStatus;

typedef struct TkCorpus TkCorpus;

typedef struct TkModels TkModels;

typedef struct TkTubeSet TkTubeSet;

typedef struct TkBox {
  double x1;
  double y1;
  double x2;
  double y2;
} TkBox;

// One candidate region; its frame is implied by its position in the input.
typedef struct TkScoredRegion {
  uint32_t region_id;
  struct TkBox bbox;
  double unary;
} TkScoredRegion;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next tubekit call on the same thread.
const char *tk_last_error(void);

// Library version as a static NUL-terminated string.
const char *tk_version(void);

enum TkStatus tk_iou(const struct TkBox *a, const struct TkBox *b, double *out);

// Mean per-frame IoU of two tracks given as parallel frame/box arrays.
enum TkStatus tk_mean_frame_iou(const uint32_t *frames_a,
                                const struct TkBox *boxes_a,
                                size_t len_a,
                                const uint32_t *frames_b,
                                const struct TkBox *boxes_b,
                                size_t len_b,
                                double *out);

// Motion score of `region` over a raw row-major magnitude grid. The grid is
// max-normalized first.
enum TkStatus tk_region_motion_score(const float *values,
                                     uint32_t width,
                                     uint32_t height,
                                     const struct TkBox *region,
                                     double *out);

enum TkStatus tk_corpus_load(const char *root, struct TkCorpus **out);

void tk_corpus_free(struct TkCorpus *corpus);

enum TkStatus tk_corpus_num_videos(const struct TkCorpus *corpus, size_t *out);

enum TkStatus tk_corpus_num_actions(const struct TkCorpus *corpus, size_t *out);

// Borrowed video id, valid while the corpus handle lives.
enum TkStatus tk_corpus_video_id(const struct TkCorpus *corpus, size_t index, const char **out);

// Borrowed action label, valid while the corpus handle lives.
enum TkStatus tk_corpus_action(const struct TkCorpus *corpus, size_t index, const char **out);

enum TkStatus tk_corpus_num_frames(const struct TkCorpus *corpus, size_t video, size_t *out);

enum TkStatus tk_corpus_num_proposals(const struct TkCorpus *corpus,
                                      size_t video,
                                      size_t frame,
                                      size_t *out);

enum TkStatus tk_models_read(const char *path, struct TkModels **out);

void tk_models_free(struct TkModels *models);

enum TkStatus tk_models_count(const struct TkModels *models, size_t *out);

enum TkStatus tk_models_dim(const struct TkModels *models, size_t index, size_t *out);

enum TkStatus tk_models_action(const struct TkModels *models, size_t index, const char **out);

// `w . phi + b` for model `index`.
enum TkStatus tk_models_score(const struct TkModels *models,
                              size_t index,
                              const double *phi,
                              size_t len,
                              double *out);

// Best path over `num_frames` frames. `regions` holds every frame's regions
// back to back, `frame_counts[t]` of them for frame `t`. On success
// `out_indices[t]` is the chosen position within frame `t`.
enum TkStatus tk_best_path(const struct TkScoredRegion *regions,
                           const size_t *frame_counts,
                           size_t num_frames,
                           double lambda,
                           size_t *out_indices,
                           double *out_score);

enum TkStatus tk_extract_tubes(const struct TkScoredRegion *regions,
                               const size_t *frame_counts,
                               size_t num_frames,
                               double lambda,
                               size_t max_tubes,
                               struct TkTubeSet **out);

// Read a `tubes.tsv` file into a tube set.
enum TkStatus tk_tubes_read(const char *path, struct TkTubeSet **out);

void tk_tubes_free(struct TkTubeSet *tubes);

enum TkStatus tk_tubes_count(const struct TkTubeSet *tubes, size_t *out);

enum TkStatus tk_tubes_score(const struct TkTubeSet *tubes, size_t index, double *out);

enum TkStatus tk_tubes_len(const struct TkTubeSet *tubes, size_t index, size_t *out);

enum TkStatus tk_tubes_box(const struct TkTubeSet *tubes,
                           size_t index,
                           size_t frame,
                           struct TkBox *out);

// All-points average precision of a PR curve ordered by descending threshold.
enum TkStatus tk_average_precision(const double *precision,
                                   const double *recall,
                                   size_t len,
                                   double *out);

// Run a `tubekit` command line in-process, e.g.
// `{"tubekit", "link", "--corpus", "dir"}`. Returns the CLI exit code
// (0 success, 1 usage, 2 data, 3 internal), or -1 if `argv` is unusable.
int tk_run_cli(int argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TUBEKIT_H */
