/* Minimal C client: simulate a scenario file and print the final state. */
#include <stdio.h>
#include <stdlib.h>

#include "selftune.h"

static char *slurp(const char *path) {
    FILE *f = fopen(path, "rb");
    if (!f) return NULL;
    fseek(f, 0, SEEK_END);
    long n = ftell(f);
    rewind(f);
    char *buf = malloc((size_t)n + 1);
    if (buf && fread(buf, 1, (size_t)n, f) != (size_t)n) {
        free(buf);
        buf = NULL;
    }
    if (buf) buf[n] = '\0';
    fclose(f);
    return buf;
}

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: %s scenario.toml\n", argv[0]);
        return 2;
    }
    char *src = slurp(argv[1]);
    if (!src) {
        perror(argv[1]);
        return 2;
    }
    StScenario *scenario = NULL;
    StStatus st = st_scenario_from_toml(src, &scenario);
    free(src);
    if (st != ST_STATUS_OK) {
        fprintf(stderr, "error %d: %s\n", (int)st, st_last_error());
        return 2;
    }
    StRun *run = NULL;
    st = st_simulate(scenario, &run);
    if (st != ST_STATUS_OK) {
        fprintf(stderr, "error %d: %s\n", (int)st, st_last_error());
        st_scenario_free(scenario);
        return 3;
    }
    size_t n = st_run_len(run), d = st_run_dim(run);
    double *states = malloc(n * d * sizeof(double));
    st_run_copy_states(run, states, n * d);
    printf("samples=%zu final_mu=%.12f mu_error=%.3e\n", n, states[n * d - 1], st_run_final_mu_error(run));
    free(states);
    st_run_free(run);
    st_scenario_free(scenario);
    return 0;
}
