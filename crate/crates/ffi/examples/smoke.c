/* Build: cargo build --release -p otsm-ffi
 *        cc -I crates/ffi/include crates/ffi/examples/smoke.c target/release/libotsm_ffi.a -lm -lpthread -ldl -o smoke */
#include <stdio.h>
#include <stdlib.h>
#include "otsm.h"

static int fail(const char *what) {
    char msg[256];
    otsm_last_error(msg, sizeof msg);
    fprintf(stderr, "%s: %s\n", what, msg);
    return 1;
}

int main(void) {
    OtsmConfig *cfg = NULL;
    if (otsm_config_new("[geometry]\nm = 4\nn = 2\nl_max = 0\n"
                        "[channel]\nprofile = \"custom\"\ndelays_ns = [0.0]\npowers_db = [0.0]\n",
                        &cfg) != OTSM_STATUS_OK)
        return fail("config");
    if (otsm_config_set(cfg, "sim.min_bits=20000") != OTSM_STATUS_OK)
        return fail("set");

    OtsmBerPoint p;
    OtsmBoundPoint b;
    if (otsm_run_point(cfg, 10.0, &p) != OTSM_STATUS_OK)
        return fail("run_point");
    if (otsm_bound_point(cfg, 10.0, &b) != OTSM_STATUS_OK)
        return fail("bound_point");
    printf("otsm %s: ber %.4g over %llu bits, chiani %.4g, abep %.4g\n", otsm_version(), p.ber,
           (unsigned long long)p.bits, b.chiani, b.abep);

    if (otsm_config_set(cfg, "scenario=9") == OTSM_STATUS_OK)
        return 1;
    fail("expected error");
    otsm_config_free(cfg);
    return 0;
}
