/* Minimal C client for libdcf_ffi.
 *
 * Build (from the repository root, after `cargo build -p dcf-ffi`):
 *
 *   cc -std=c99 -Icrates/ffi/include crates/ffi/examples/demo.c \
 *      -Ltarget/debug -ldcf_ffi -Wl,-rpath,"$PWD/target/debug" -o demo
 *   ./demo
 */

#include <inttypes.h>
#include <stdio.h>

#include "dcf.h"

static int check(int code, const char *what) {
    if (code != DCF_OK) {
        fprintf(stderr, "%s failed (%d): %s\n", what, code, dcf_last_error());
        return 1;
    }
    return 0;
}

int main(void) {
    printf("dcf version %s\n", dcf_version());

    DcfConfig *cfg = NULL;
    if (check(dcf_config_new(NULL, &cfg), "dcf_config_new"))
        return 1;

    DcfOperatingPoint op;
    if (check(dcf_solve(cfg, &op), "dcf_solve")) {
        dcf_config_free(cfg);
        return 1;
    }
    printf("tau=%.6e S=%.1f bps region=%s lambda_c=%.4f pkt/s\n", op.tau, op.s_bps,
           op.region == DCF_REGION_BLC ? "BLC" : "LC", op.lambda_c_pps);

    DcfOptimization opt;
    if (check(dcf_optimize(cfg, &opt), "dcf_optimize")) {
        dcf_config_free(cfg);
        return 1;
    }
    printf("payload_opt_b=%" PRId64 " achieved_pe=%.6f\n", opt.payload_opt_b, opt.achieved_pe);
    dcf_config_free(cfg);

    const char *sim_json =
        "{\"scenario\": {\"n_stations\": 3, \"lambda_pps\": 5.0},"
        " \"sim\": {\"duration_s\": 2.0, \"warmup_s\": 0.2, \"seed\": 7}}";
    if (check(dcf_config_new(sim_json, &cfg), "dcf_config_new(sim)"))
        return 1;
    DcfSimMetrics m;
    uint64_t seed = 42;
    if (check(dcf_simulate(cfg, &seed, &m), "dcf_simulate")) {
        dcf_config_free(cfg);
        return 1;
    }
    printf("sim: %" PRIu64 " slots, delivered %" PRIu64 " bits, S=%.1f bps\n", m.slots,
           m.delivered_payload_bits, m.s_bps);
    dcf_config_free(cfg);
    return 0;
}
