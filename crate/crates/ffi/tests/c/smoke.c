#include <stdio.h>
#include <stdlib.h>

#include "perishable.h"

static int fail(const char *what, PerishableStatus st) {
    const char *msg = perishable_last_error();
    fprintf(stderr, "%s: status %d: %s\n", what, (int)st, msg ? msg : "(none)");
    return 1;
}

int main(void) {
    PerishableExperiment *exp = NULL;
    PerishableStatus st = perishable_experiment_from_preset("a/m2/exp1", &exp);
    if (st != PERISHABLE_STATUS_OK) return fail("preset", st);

    uint64_t states = 0;
    perishable_experiment_num_states(exp, &states);

    PerishableSolution *sol = NULL;
    st = perishable_solve(exp, NULL, false, &sol);
    if (st != PERISHABLE_STATUS_OK) return fail("solve", st);

    size_t n = perishable_solution_len(sol);
    uint32_t *actions = malloc(n * sizeof *actions);
    st = perishable_solution_actions(sol, actions, n);
    if (st != PERISHABLE_STATUS_OK) return fail("actions", st);

    PerishableEvaluation ev;
    st = perishable_evaluate_solution(exp, sol, 500, 0, &ev);
    if (st != PERISHABLE_STATUS_OK) return fail("evaluate", st);

    PerishableExperiment *big = NULL;
    PerishableStatus cap = perishable_experiment_from_preset("c/m8/exp1", &big);
    PerishableSolution *none = NULL;
    if (cap == PERISHABLE_STATUS_OK) cap = perishable_solve(big, NULL, false, &none);

    printf("states=%llu len=%zu converged=%d action0=%u return=%.3f capacity=%d\n",
           (unsigned long long)states, n, (int)perishable_solution_converged(sol), actions[0],
           ev.return_mean, (int)cap);

    free(actions);
    perishable_solution_free(sol);
    perishable_experiment_free(big);
    perishable_experiment_free(exp);
    return 0;
}
