/* C interface to the traffic signal control library. */
#ifndef FRAP_FRAP_H
#define FRAP_FRAP_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define FRAP_API __declspec(dllexport)
#else
#define FRAP_API __attribute__((visibility("default")))
#endif

typedef enum frap_status {
    FRAP_OK = 0,
    FRAP_E_INVALID_ARGUMENT = 1, /* null pointer, bad enum value, out-of-range index */
    FRAP_E_IO = 2,               /* file could not be read or written */
    FRAP_E_CONFIG = 3,           /* malformed or inconsistent configuration */
    FRAP_E_CHECKPOINT = 4,       /* checkpoint missing, corrupt or incompatible */
    FRAP_E_STATE = 5,            /* call not valid in the handle's current state */
    FRAP_E_BUFFER_TOO_SMALL = 6, /* *needed holds the required size */
    FRAP_E_INTERNAL = 7
} frap_status;

typedef struct frap_experiment frap_experiment;
typedef struct frap_simulator frap_simulator;

/* Called with one line of progress output, without the trailing newline. */
typedef void (*frap_log_fn)(const char* line, void* user);

/* Message of the last failed call on this thread; empty if none. */
FRAP_API const char* frap_last_error(void);
FRAP_API const char* frap_status_name(frap_status status);
FRAP_API const char* frap_version(void);

FRAP_API frap_status frap_experiment_load(const char* path, frap_experiment** out);
FRAP_API frap_status frap_experiment_from_json(const char* json, frap_experiment** out);
FRAP_API void frap_experiment_destroy(frap_experiment* exp);

FRAP_API frap_status frap_experiment_set_seed(frap_experiment* exp, uint64_t seed);
FRAP_API frap_status frap_experiment_set_out_dir(frap_experiment* exp, const char* dir);
/* frap | vanilla | fixedtime | formula | sotl */
FRAP_API frap_status frap_experiment_set_agent(frap_experiment* exp, const char* agent);
FRAP_API frap_status frap_experiment_set_sync(frap_experiment* exp, int sync);
FRAP_API frap_status frap_experiment_set_log(frap_experiment* exp, frap_log_fn fn, void* user);
/* Writes the effective configuration as NUL-terminated JSON. */
FRAP_API frap_status frap_experiment_to_json(const frap_experiment* exp, char* buf, size_t cap, size_t* needed);

/* Trains the configured learned agent; writes learning_curve.csv and checkpoint.bin under the out dir. */
FRAP_API frap_status frap_cmd_train(frap_experiment* exp, double* best_travel_time);
/* Greedy evaluation of a checkpoint; writes vehicles.csv and intervals.csv. */
FRAP_API frap_status frap_cmd_eval(frap_experiment* exp, const char* checkpoint, double* avg_travel_time,
                                   int64_t* exited_count);
/* methods: comma-separated list; writes compare.csv. */
FRAP_API frap_status frap_cmd_compare(frap_experiment* exp, const char* methods);
/* op: flip | rot90 | rot180 | rot270 (or any symmetry name); writes transfer.csv. */
FRAP_API frap_status frap_cmd_transfer(frap_experiment* exp, const char* checkpoint, const char* op, int retrain,
                                       double* original_travel_time, double* transferred_travel_time);
FRAP_API frap_status frap_cmd_gen_flow(frap_experiment* exp, const char* path);

/* Phase table for a geometry (3, 4 or 5 approaches) and phase set ("8-phase" or "4-phase") as JSON. */
FRAP_API frap_status frap_phase_table_json(int approaches, const char* phase_set, char* buf, size_t cap,
                                           size_t* needed);

/* Simulator over the experiment's geometry and evaluation flow. */
FRAP_API frap_status frap_simulator_create(const frap_experiment* exp, frap_simulator** out);
FRAP_API void frap_simulator_destroy(frap_simulator* sim);
FRAP_API frap_status frap_simulator_reset(frap_simulator* sim, uint64_t seed);
FRAP_API int frap_simulator_num_intersections(const frap_simulator* sim);
FRAP_API int frap_simulator_num_movements(const frap_simulator* sim);
FRAP_API int frap_simulator_num_phases(const frap_simulator* sim);
FRAP_API int frap_simulator_clock(const frap_simulator* sim);
/* One decision interval; actions and rewards hold one entry per intersection. */
FRAP_API frap_status frap_simulator_step(frap_simulator* sim, const int* actions, size_t n, double* rewards, int* done);
/* counts and signal_bits must hold num_movements entries; phase is -1 during clearance. */
FRAP_API frap_status frap_simulator_observe(const frap_simulator* sim, int intersection, int* counts, int* signal_bits,
                                            int* phase);
FRAP_API frap_status frap_simulator_metrics(const frap_simulator* sim, double* avg_travel_time, int64_t* exited_count,
                                            int64_t* in_network_count);

#ifdef __cplusplus
}
#endif

#endif
