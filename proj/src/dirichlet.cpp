#include "cdhmm/dirichlet.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <stdexcept>

namespace cdhmm {

static void check_concentration(const DirichletPosterior& q, const char* who) {
  if (q.size() == 0)
    throw std::invalid_argument(std::string(who) + ": empty concentration vector");
  for (int i = 0; i < q.size(); ++i)
    if (!(q.concentration(i) > 0.0) || !std::isfinite(q.concentration(i)))
      throw std::invalid_argument(std::string(who) + ": concentrations must be finite and positive");
}

Vec expected_log_probs(const DirichletPosterior& q) {
  check_concentration(q, "expected_log_probs");
  const double psi_total = boost::math::digamma(q.concentration.sum());
  Vec out(q.size());
  for (int i = 0; i < q.size(); ++i)
    out(i) = boost::math::digamma(q.concentration(i)) - psi_total;
  return out;
}

Vec starred_probs(const DirichletPosterior& q) {
  return expected_log_probs(q).array().exp();
}

double dirichlet_kl(const DirichletPosterior& q, const DirichletPosterior& p) {
  check_concentration(q, "dirichlet_kl");
  check_concentration(p, "dirichlet_kl");
  if (q.size() != p.size())
    throw std::invalid_argument("dirichlet_kl: dimension mismatch");
  const double qs = q.concentration.sum();
  const double ps = p.concentration.sum();
  const double psi_qs = boost::math::digamma(qs);
  double kl = std::lgamma(qs) - std::lgamma(ps);
  for (int i = 0; i < q.size(); ++i) {
    const double a = q.concentration(i);
    const double b = p.concentration(i);
    kl += std::lgamma(b) - std::lgamma(a);
    kl += (a - b) * (boost::math::digamma(a) - psi_qs);
  }
  return kl;
}

}  // namespace cdhmm
