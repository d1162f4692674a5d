// Testing a normal mean with known variance. The adjustment factors are
// exactly one here, so r* equals r and LR** equals LR.

#include <cstdio>

#include "ellip/ellip.hpp"

int main() {
  using namespace ellip;

  const double y[] = {0.42, -0.13, 0.88, 1.21, 0.05, 0.67, 0.31, -0.24, 0.93, 0.58};
  Dataset data;
  for (double v : y) {
    Observation o;
    o.y = VectorXd::Constant(1, v);
    o.x.resize(1, 0);
    data.observations.push_back(o);
  }

  LocationScaleModel model(0.25);  // sigma2 known
  Hypothesis h{{0}, VectorXd::Zero(1), Sided::two};
  const TestReport rep = run_test(model, EllipticalFamily::normal(), data, h);

  std::printf("mu_hat = %.6f\n", rep.theta_hat(0));
  std::printf("LR  = %.6f  p = %.4f\n", rep.LR, rep.p_LR);
  std::printf("r   = %.6f  p = %.4f\n", *rep.r, *rep.p_r);
  std::printf("r*  = %.6f  p = %.4f  (gamma = %.12f)\n", *rep.r_star, *rep.p_r_star, *rep.gamma);
  std::printf("LR** = %.6f (rho = %.12f)\n", rep.LR_star2, rep.rho);
}
