/* Smoke test for the C interface.
 *
 * Build after `cargo build -p sharpcov-capi --release`:
 *   gcc -std=c99 -I crates/sharpcov-capi/include \
 *       crates/sharpcov-capi/examples/smoke.c \
 *       target/release/libsharpcov_capi.a -lm -lpthread -ldl -o smoke
 */
#include <assert.h>
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include "sharpcov.h"

int main(void) {
    const size_t p = 40, n = 10, q = 2;
    double *y = malloc(p * n * sizeof(double));
    /* deterministic spiked panel: two strong factors plus a small wobble */
    for (size_t t = 0; t < n; t++) {
        double x1 = sin(0.9 * (double)t + 0.3), x2 = cos(1.7 * (double)t);
        for (size_t i = 0; i < p; i++) {
            double b1 = 3.0 + sin(0.2 * (double)i), b2 = 2.0 * cos(0.3 * (double)i);
            y[t * p + i] = b1 * x1 + b2 * x2 + 0.1 * sin(12.9898 * (double)(i + 7 * t));
        }
    }
    SharpcovPanel *panel = NULL;
    assert(sharpcov_panel_create(y, p, n, &panel) == SHARPCOV_STATUS_OK);
    SharpcovSpectrum *spec = NULL;
    assert(sharpcov_spectrum_compute(panel, q, true, true, &spec) == SHARPCOV_STATUS_OK);
    assert(sharpcov_spectrum_p(spec) == p && sharpcov_spectrum_q(spec) == q);

    double zeta[40];
    for (size_t i = 0; i < p; i++) zeta[i] = 1.0;
    SharpcovBasis *basis = NULL;
    assert(sharpcov_basis_compute(spec, SHARPCOV_BASIS_KIND_SHARP, zeta, p, &basis) == SHARPCOV_STATUS_OK);
    SharpcovModel *model = NULL;
    assert(sharpcov_model_assemble(basis, spec, &model) == SHARPCOV_STATUS_OK);
    double w[40];
    assert(sharpcov_model_min_variance(model, zeta, p, w) == SHARPCOV_STATUS_OK);
    double budget = 0.0;
    for (size_t i = 0; i < p; i++) budget += w[i];
    assert(fabs(budget - 1.0) < 1e-10);

    assert(sharpcov_spectrum_compute(NULL, q, true, true, &spec) == SHARPCOV_STATUS_NULL_ARGUMENT);
    printf("capi smoke ok: budget %.12f, status name: %s\n", budget,
           sharpcov_status_name(SHARPCOV_STATUS_OK));
    sharpcov_model_free(model);
    sharpcov_basis_free(basis);
    sharpcov_spectrum_free(spec);
    sharpcov_panel_free(panel);
    free(y);
    return 0;
}
