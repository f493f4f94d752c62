#include <stdio.h>
#include <string.h>

#include "ddf2pol.h"

#define PATCH 5
#define CLASSES 3

int main(void) {
    Ddf2polModel *model = NULL;
    if (ddf2pol_model_new(4, CLASSES, 0, &model) != DDF2POL_STATUS_USAGE) return 1;
    char msg[256];
    ddf2pol_last_error(msg, sizeof msg);
    if (strstr(msg, "patch") == NULL) return 2;

    if (ddf2pol_model_new(PATCH, CLASSES, 1, &model) != DDF2POL_STATUS_OK) return 3;
    if (ddf2pol_model_param_count(model) == 0) return 4;

    enum { PX = PATCH * PATCH };
    static double real[PX * DDF2POL_NUM_DESCRIPTORS], re[PX * DDF2POL_NUM_COMPLEX], im[PX * DDF2POL_NUM_COMPLEX];
    for (int i = 0; i < PX * DDF2POL_NUM_DESCRIPTORS; i++) real[i] = (i % 7) * 0.1 - 0.3;
    for (int i = 0; i < PX * DDF2POL_NUM_COMPLEX; i++) { re[i] = (i % 5) * 0.1; im[i] = -re[i]; }
    double logits[CLASSES];
    if (ddf2pol_model_predict(model, 1, real, re, im, logits) != DDF2POL_STATUS_OK) return 5;
    ddf2pol_model_free(model);

    uint64_t counts[4] = {40, 10, 5, 45};
    Ddf2polMetrics m;
    if (ddf2pol_metrics(2, counts, &m, NULL) != DDF2POL_STATUS_OK) return 6;
    printf("version %s param_count ok oa %.2f kappa %.2f logits %.6f %.6f %.6f\n", ddf2pol_version(),
           m.overall_accuracy, m.kappa, logits[0], logits[1], logits[2]);
    return 0;
}
