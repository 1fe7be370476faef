/* Build: cargo build -p fbnet-ffi --release
 *        cc -Iinclude examples/analyze.c ../../target/release/libfbnet_ffi.a -lm -lpthread -ldl -o analyze
 * Run:   ./analyze ../core/networks/two_hop.json
 */
#include <stdio.h>
#include <stdlib.h>
#include "fbnet.h"

static char *slurp(const char *path) {
    FILE *f = fopen(path, "rb");
    if (!f) return NULL;
    fseek(f, 0, SEEK_END);
    long n = ftell(f);
    rewind(f);
    char *buf = malloc(n + 1);
    if (fread(buf, 1, n, f) != (size_t)n) { fclose(f); free(buf); return NULL; }
    buf[n] = 0;
    fclose(f);
    return buf;
}

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: %s network.json\n", argv[0]);
        return 1;
    }
    char *json = slurp(argv[1]);
    if (!json) { perror(argv[1]); return 1; }

    FbnetNetwork *net = NULL;
    if (fbnet_network_from_json(json, &net) != FBNET_STATUS_OK) {
        fprintf(stderr, "config: %s\n", fbnet_last_error());
        free(json);
        return 1;
    }
    free(json);

    FbnetAnalysis *a = NULL;
    FbnetStatus st = fbnet_analyze(net, NULL, &a);
    if (st != FBNET_STATUS_OK) {
        fprintf(stderr, "analyze (%d): %s\n", st, fbnet_last_error());
        fbnet_network_free(net);
        return 1;
    }
    printf("converged=%d throughput=%.6f delay=%.6f\n",
           fbnet_analysis_converged(a), fbnet_analysis_throughput(a), fbnet_analysis_mean_delay(a));

    fbnet_analysis_free(a);
    fbnet_network_free(net);
    return 0;
}
