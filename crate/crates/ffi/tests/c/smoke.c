#include <math.h>
#include <stdio.h>
#include <string.h>

#include "landscape_lab.h"

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond, \
              ll_last_error_message());                               \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  const double pts[2] = {-1.0, 1.0};
  const uint32_t labels[2] = {0, 1};
  LlLandscape *l = NULL;
  CHECK(ll_landscape_new(pts, labels, 2, 1, 4.0, &l) == LL_STATUS_OK);
  CHECK(ll_landscape_len(l) == 2 && ll_landscape_dim(l) == 1);

  double x = 0.0, e = 0.0;
  CHECK(ll_energy(l, &x, 1, &e) == LL_STATUS_OK);
  CHECK(fabs(e - (0.5 - log(2.0) / 4.0)) < 1e-12);

  double q = 0.3, t = 0.0;
  LlFlowResult r;
  LlFlowConfig cfg = ll_flow_config_default();
  CHECK(ll_flow(l, &q, 1, &cfg, &t, &r) == LL_STATUS_OK);
  CHECK(r.converged && r.basin_memory_index == 1 && t > 0.99);

  CHECK(ll_energy(NULL, &x, 1, &e) == LL_STATUS_NULL);
  CHECK(strlen(ll_last_error_message()) > 0);
  CHECK(ll_energy(l, &x, 2, &e) == LL_STATUS_INPUT);

  double init = 0.0, smooth = 0.0;
  CHECK(ll_odds(9, 1, 3, &init, &smooth) == LL_STATUS_OK);
  CHECK(init == 9.0 && smooth == 729.0);

  ll_landscape_free(l);
  ll_landscape_free(NULL);
  printf("ok %s\n", ll_version());
  return 0;
}
