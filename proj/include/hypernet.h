/* C interface to the detector: dataset generation, training, inference,
 * evaluation. All functions return HN_OK or an error code; the message for
 * the most recent failure on the calling thread is available through
 * hn_last_error(). Paths are UTF-8. */

#ifndef HYPERNET_H
#define HYPERNET_H

#ifdef __cplusplus
extern "C" {
#endif

#define HN_OK 0
#define HN_ERR_USAGE 1   /* bad arguments or malformed configuration */
#define HN_ERR_DATA 2    /* unreadable or inconsistent files */
#define HN_ERR_NUMERIC 3 /* training diverged or produced non-finite values */

/* Message for the last failing call on this thread; empty string if none. */
const char* hn_last_error(void);

/* Write a synthetic shapes detection dataset into dir. */
int hn_generate_shapes(const char* dir, int count, int image_size, int num_classes,
                       unsigned long long seed);

typedef struct hn_model hn_model;

/* Load a trained model from a checkpoint file. */
int hn_model_open(const char* path, hn_model** out);
void hn_model_close(hn_model* model);

/* Architecture snapshot as JSON; the pointer stays valid until close. */
const char* hn_model_config(hn_model* model);

typedef void (*hn_metric_cb)(int stage, int iteration, double l_cls, double l_reg,
                             double total, void* user);

/* Run the full multi-stage schedule on the dataset in data_dir and write the
 * final checkpoint to model_out. config_json may be "{}" or override any of:
 *   variant ("basic"|"sp"), seed, stage2..stage5 (iteration counts),
 *   minibatch, lr, lr_late, flip, log_every.
 * metrics_csv (optional, may be NULL) receives the logged loss curve. */
int hn_train(const char* data_dir, const char* config_json, const char* model_out,
             const char* metrics_csv, hn_metric_cb on_metric, void* user);

/* Region proposals for every image in data_dir, top_k per image (0 = the
 * model's test-time default), written to out_json. */
int hn_propose(hn_model* model, const char* data_dir, int top_k, const char* out_json);

/* Full detection (propose + classify) for every image in data_dir. */
int hn_detect(hn_model* model, const char* data_dir, const char* out_json);

/* Proposal quality: recall against overlap threshold and against proposal
 * count, plus the smallest count reaching recall_target. */
int hn_eval_proposals(hn_model* model, const char* data_dir, int top_k,
                      double recall_target, const char* out_json);

/* Detection quality: per-class and mean average precision at iou_threshold. */
int hn_eval_detections(hn_model* model, const char* data_dir, double iou_threshold,
                       const char* out_json);

/* Median per-stage forward timings over `runs` passes. */
int hn_benchmark(hn_model* model, const char* data_dir, int runs, const char* out_json);

/* Feature-magnitude heatmap of the fused map for one sample, as a P5 graymap. */
int hn_viz_hyper(hn_model* model, const char* data_dir, const char* sample_id,
                 const char* out_pgm);

#ifdef __cplusplus
}
#endif

#endif /* HYPERNET_H */
