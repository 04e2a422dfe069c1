#pragma once

#include "cdhmm/types.hpp"

namespace cdhmm {

// Posterior (or prior) over one probability vector.
struct DirichletPosterior {
  Vec concentration;

  int size() const { return static_cast<int>(concentration.size()); }

  // Posterior mean, exactly normalized.
  Vec mean() const { return concentration / concentration.sum(); }
};

// E[log p_i] = psi(c_i) - psi(sum c). Entries are finite and negative for
// any valid concentration vector.
Vec expected_log_probs(const DirichletPosterior& q);

// exp(E[log p]); sums to at most 1 (Jensen), strictly positive entries
// unless the digamma gap underflows.
Vec starred_probs(const DirichletPosterior& q);

// KL(q || p) between Dirichlets of the same dimension.
double dirichlet_kl(const DirichletPosterior& q, const DirichletPosterior& p);

}  // namespace cdhmm
