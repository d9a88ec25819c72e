/* C interface to the dcf 802.11 DCF analytical model, optimizer, and
 * slot-level simulator.
 *
 * Configuration uses the same JSON document the `dcf` command-line tool
 * reads (sections "timing", "scenario", "solver", "sim"); an empty object
 * "{}" or a NULL pointer selects the documented defaults.
 *
 * Status codes mirror the CLI exit codes:
 *   0  success
 *   2  configuration or parameter error (also NULL-pointer misuse)
 *   3  the equilibrium solver failed to converge
 *   4  the optimization target is infeasible
 * After any nonzero return, dcf_last_error() describes the failure.
 *
 * This header is maintained by hand and kept in sync with the exported
 * symbols by the crate's test suite.
 */

#ifndef DCF_H
#define DCF_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define DCF_OK 0
#define DCF_ERR_INVALID 2
#define DCF_ERR_SOLVER 3
#define DCF_ERR_INFEASIBLE 4

/* Values of the `region` fields below. */
#define DCF_REGION_BLC 0 /* below link capacity: load passes through */
#define DCF_REGION_LC 1  /* at link capacity: the cell saturates */

/* Opaque, thread-compatible configuration handle. */
typedef struct DcfConfig DcfConfig;

/* Solved operating point; mirrors one row of the CLI's solve.csv. */
typedef struct DcfOperatingPoint {
    double tau;          /* per-station transmission probability */
    double p_col;        /* conditional collision probability */
    double p_eq;         /* equivalent failure probability */
    double q;            /* P(at least one arrival per slot) */
    double e_slot_s;     /* expected slot duration, seconds */
    double s_bps;        /* aggregate throughput, bits/second */
    double tau_m;        /* throughput-maximizing transmission probability */
    double s_m_bps;      /* link capacity, bits/second */
    double lambda_c_pps; /* critical arrival rate, packets/second */
    double residual;     /* fixed-point residual at the solution */
    uint64_t iterations; /* solver iterations consumed */
    int region;          /* DCF_REGION_BLC or DCF_REGION_LC */
    int multiple_roots;  /* nonzero: residual scan saw multiple roots */
} DcfOperatingPoint;

/* Cross-layer tuning outcome; payload sizes in bytes, -1 where the chosen
 * region leaves a field unset. Mirrors the CLI's optimize.csv. */
typedef struct DcfOptimization {
    double achieved_pe;     /* packet error rate at the selected payload */
    double predicted_s_bps; /* model-predicted throughput after tuning */
    double lambda_c_pps;    /* critical load of the tuned configuration */
    int64_t w_op;           /* optimal minimum contention window, or -1 */
    int64_t payload_step1_b; /* payload after the load-matching step, or -1 */
    int64_t payload_step2_b; /* payload after the error-bound step, or -1 */
    int64_t payload_opt_b;  /* final selected payload, or -1 */
    int region;             /* DCF_REGION_BLC or DCF_REGION_LC */
    int region_shift_warning; /* nonzero: tuning crossed the region boundary */
} DcfOptimization;

/* Aggregate simulation metrics; mirrors the CLI's metrics.csv. Slot counts
 * other than `slots` refer to the post-warmup measurement window. */
typedef struct DcfSimMetrics {
    double sim_time_s;
    double measured_time_s;
    double s_bps;
    double measured_tau;
    double measured_p_col;
    uint64_t slots;
    uint64_t slots_measured;
    uint64_t idle_slots;
    uint64_t success_slots;
    uint64_t collision_slots;
    uint64_t error_slots;
    uint64_t delivered_payload_bits;
} DcfSimMetrics;

/* Library version as a static NUL-terminated string. */
const char *dcf_version(void);

/* Message for the most recent failure on the calling thread ("" if none).
 * Valid until the next failing call on the same thread. Do not free. */
const char *dcf_last_error(void);

/* Parses and validates a JSON configuration (NULL selects all defaults).
 * On DCF_OK, *out must later be released with dcf_config_free(). */
int dcf_config_new(const char *json_utf8, DcfConfig **out);

/* Releases a configuration handle. NULL is a no-op. */
void dcf_config_free(DcfConfig *cfg);

/* Solves the configured scenario for its equilibrium operating point. */
int dcf_solve(const DcfConfig *cfg, DcfOperatingPoint *out);

/* Runs the cross-layer tuning step for the configured scenario. */
int dcf_optimize(const DcfConfig *cfg, DcfOptimization *out);

/* Runs the slot-level simulator. `seed` may be NULL to use the configured
 * seed, or point at a replacement master seed. Identical configurations and
 * seeds produce identical metrics. */
int dcf_simulate(const DcfConfig *cfg, const uint64_t *seed, DcfSimMetrics *out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* DCF_H */
