#include "cdhmm/data_io.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "cdhmm/rng.hpp"

namespace cdhmm {

using json = nlohmann::ordered_json;

namespace {

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Vec vec_from_json(const json& a, const char* what) {
  if (!a.is_array())
    throw std::invalid_argument(std::string("expected an array for ") + what);
  Vec v(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number())
      throw std::invalid_argument(std::string("non-numeric entry in ") + what);
    v(static_cast<int>(i)) = a[i].get<double>();
  }
  return v;
}

Mat mat_from_json(const json& a, const char* what) {
  if (!a.is_array() || a.empty())
    throw std::invalid_argument(std::string("expected a nonempty matrix for ") + what);
  const size_t cols = a[0].is_array() ? a[0].size() : 0;
  Mat m(a.size(), cols);
  for (size_t i = 0; i < a.size(); ++i) {
    Vec row = vec_from_json(a[i], what);
    if (static_cast<size_t>(row.size()) != cols)
      throw std::invalid_argument(std::string("ragged matrix for ") + what);
    m.row(static_cast<int>(i)) = row.transpose();
  }
  return m;
}

json model_to_json(const TrainedModel& model) {
  const ModelHyper& h = model.hyper;
  json hyper;
  hyper["n_states"] = h.n_states;
  hyper["n_components"] = h.n_components;
  hyper["max_lag"] = h.max_lag;
  hyper["dim"] = h.dim;
  hyper["alpha0"] = vec_to_json(h.alpha0);
  hyper["alpha"] = mat_to_json(h.alpha);
  hyper["eta0"] = vec_to_json(h.eta0);
  json eta_dep = json::array();
  for (const Mat& m : h.eta_dep) eta_dep.push_back(mat_to_json(m));
  hyper["eta_dep"] = std::move(eta_dep);
  hyper["w"] = mat_to_json(h.w);
  hyper["nw_lambda"] = h.nw_lambda;
  hyper["nw_mean"] = vec_to_json(h.nw_mean);
  hyper["nw_dof"] = h.nw_dof;
  hyper["nw_scale"] = mat_to_json(h.nw_scale);

  const LatentPosteriors& p = model.posteriors;
  json post;
  post["q_pi_hat"] = vec_to_json(p.q_pi_hat.concentration);
  json a_hat = json::array();
  for (const auto& row : p.q_A_hat) a_hat.push_back(vec_to_json(row.concentration));
  post["q_A_hat"] = std::move(a_hat);
  post["q_pi"] = vec_to_json(p.q_pi.concentration);
  json a_dep = json::array();
  for (const auto& lag : p.q_A_dep) {
    json rows = json::array();
    for (const auto& row : lag) rows.push_back(vec_to_json(row.concentration));
    a_dep.push_back(std::move(rows));
  }
  post["q_A_dep"] = std::move(a_dep);
  json q_c = json::array();
  for (const auto& row : p.q_c) q_c.push_back(vec_to_json(row.concentration));
  post["q_c"] = std::move(q_c);

  json em;
  json mw = json::array();
  for (const auto& row : model.emissions.mix_weights)
    mw.push_back(vec_to_json(row.concentration));
  em["mix_weights"] = std::move(mw);
  json comps = json::array();
  for (const auto& row : model.emissions.components) {
    json jrow = json::array();
    for (const auto& c : row) {
      json jc;
      jc["lambda"] = c.lambda;
      jc["mean"] = vec_to_json(c.mean);
      jc["dof"] = c.dof;
      jc["scale"] = mat_to_json(c.scale);
      jrow.push_back(std::move(jc));
    }
    comps.push_back(std::move(jrow));
  }
  em["components"] = std::move(comps);

  json out;
  out["hyper"] = std::move(hyper);
  out["latent_posteriors"] = std::move(post);
  out["emissions"] = std::move(em);
  out["elbo_trace"] = model.elbo_trace;
  out["converged"] = model.converged;
  return out;
}

TrainedModel model_from_json(const json& j) {
  TrainedModel model;
  const json& hy = j.at("hyper");
  ModelHyper& h = model.hyper;
  h.n_states = hy.at("n_states").get<int>();
  h.n_components = hy.at("n_components").get<int>();
  h.max_lag = hy.at("max_lag").get<int>();
  h.dim = hy.at("dim").get<int>();
  h.alpha0 = vec_from_json(hy.at("alpha0"), "hyper.alpha0");
  h.alpha = mat_from_json(hy.at("alpha"), "hyper.alpha");
  h.eta0 = vec_from_json(hy.at("eta0"), "hyper.eta0");
  for (const auto& m : hy.at("eta_dep"))
    h.eta_dep.push_back(mat_from_json(m, "hyper.eta_dep"));
  h.w = mat_from_json(hy.at("w"), "hyper.w");
  h.nw_lambda = hy.at("nw_lambda").get<double>();
  h.nw_mean = vec_from_json(hy.at("nw_mean"), "hyper.nw_mean");
  h.nw_dof = hy.at("nw_dof").get<double>();
  h.nw_scale = mat_from_json(hy.at("nw_scale"), "hyper.nw_scale");

  const json& po = j.at("latent_posteriors");
  LatentPosteriors& p = model.posteriors;
  p.q_pi_hat = {vec_from_json(po.at("q_pi_hat"), "q_pi_hat")};
  for (const auto& row : po.at("q_A_hat"))
    p.q_A_hat.push_back({vec_from_json(row, "q_A_hat")});
  p.q_pi = {vec_from_json(po.at("q_pi"), "q_pi")};
  for (const auto& lag : po.at("q_A_dep")) {
    std::vector<DirichletPosterior> rows;
    for (const auto& row : lag) rows.push_back({vec_from_json(row, "q_A_dep")});
    p.q_A_dep.push_back(std::move(rows));
  }
  for (const auto& row : po.at("q_c")) p.q_c.push_back({vec_from_json(row, "q_c")});

  const json& em = j.at("emissions");
  for (const auto& row : em.at("mix_weights"))
    model.emissions.mix_weights.push_back({vec_from_json(row, "mix_weights")});
  for (const auto& jrow : em.at("components")) {
    std::vector<NwPosterior> row;
    for (const auto& jc : jrow) {
      NwPosterior c;
      c.lambda = jc.at("lambda").get<double>();
      c.mean = vec_from_json(jc.at("mean"), "component mean");
      c.dof = jc.at("dof").get<double>();
      c.scale = mat_from_json(jc.at("scale"), "component scale");
      row.push_back(std::move(c));
    }
    model.emissions.components.push_back(std::move(row));
  }

  model.elbo_trace = j.at("elbo_trace").get<std::vector<double>>();
  model.converged = j.at("converged").get<bool>();
  model.hyper.validate();
  model.posteriors.validate(model.hyper);
  model.emissions.validate();
  return model;
}

json pca_to_json(const PcaTransform& t) {
  json j;
  j["type"] = "pca";
  j["mean"] = vec_to_json(t.mean);
  j["components"] = mat_to_json(t.components);
  j["eigenvalues"] = vec_to_json(t.eigenvalues);
  return j;
}

PcaTransform pca_from_json(const json& j) {
  if (j.at("type").get<std::string>() != "pca")
    throw std::invalid_argument("unknown preprocessing type '" +
                                j.at("type").get<std::string>() + "'");
  PcaTransform t;
  t.mean = vec_from_json(j.at("mean"), "preprocessing.mean");
  t.components = mat_from_json(j.at("components"), "preprocessing.components");
  t.eigenvalues = vec_from_json(j.at("eigenvalues"), "preprocessing.eigenvalues");
  if (t.components.cols() != t.mean.size() ||
      t.eigenvalues.size() != t.components.rows())
    throw std::invalid_argument("inconsistent preprocessing transform shapes");
  return t;
}

constexpr int kSchemaVersion = 1;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("failed to parse '" + path + "': " + e.what());
  }
  return j;
}

void check_schema(const json& j, const std::string& path) {
  const int v = j.at("schema_version").get<int>();
  if (v != kSchemaVersion)
    throw std::invalid_argument("'" + path + "' has schema version " +
                                std::to_string(v) + ", this build reads version " +
                                std::to_string(kSchemaVersion));
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write '" + path + "'");
  out << content;
  if (!out) throw std::runtime_error("failed while writing '" + path + "'");
}

}  // namespace

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  Dataset data;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": malformed JSON record: " + e.what());
    }
    SequenceRecord rec;
    try {
      rec.id = j.at("id").get<std::string>();
      if (j.contains("label") && !j.at("label").is_null())
        rec.label = j.at("label").get<std::string>();
      const json& frames = j.at("frames");
      if (!frames.is_array() || frames.empty())
        throw std::invalid_argument("frames must be a nonempty array");
      for (const auto& f : frames) {
        if (f.is_null()) {
          rec.frames.emplace_back(std::nullopt);
        } else {
          rec.frames.emplace_back(vec_from_json(f, "frame"));
        }
      }
    } catch (const json::exception& e) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": invalid record: " + e.what());
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": invalid record: " + e.what());
    }
    data.push_back(std::move(rec));
  }
  if (data.empty()) throw std::invalid_argument("'" + path + "' contains no records");
  dataset_dim(data);
  return data;
}

void save_dataset(const std::string& path, const Dataset& data) {
  std::ostringstream out;
  for (const auto& rec : data) {
    json j;
    j["id"] = rec.id;
    j["label"] = rec.label ? json(*rec.label) : json(nullptr);
    json frames = json::array();
    for (const auto& f : rec.frames)
      frames.push_back(f ? vec_to_json(*f) : json(nullptr));
    j["frames"] = std::move(frames);
    out << j.dump() << "\n";
  }
  write_text_file(path, out.str());
}

void save_model(const std::string& path, const TrainedModel& model) {
  json j;
  j["schema_version"] = kSchemaVersion;
  json body = model_to_json(model);
  for (auto& [key, value] : body.items()) j[key] = std::move(value);
  write_text_file(path, j.dump(2) + "\n");
}

TrainedModel load_model(const std::string& path) {
  json j = read_json_file(path);
  check_schema(j, path);
  try {
    return model_from_json(j);
  } catch (const json::exception& e) {
    throw std::invalid_argument("'" + path + "' is not a valid model file: " + e.what());
  }
}

void save_bank(const std::string& path, const ModelBank& bank) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["preprocessing"] = bank.preprocessing ? pca_to_json(*bank.preprocessing)
                                          : json(nullptr);
  json classes = json::array();
  for (const auto& [label, model] : bank.classes) {
    json entry;
    entry["label"] = label;
    entry["model"] = model_to_json(model);
    classes.push_back(std::move(entry));
  }
  j["classes"] = std::move(classes);
  write_text_file(path, j.dump(2) + "\n");
}

ModelBank load_bank(const std::string& path) {
  json j = read_json_file(path);
  check_schema(j, path);
  ModelBank bank;
  try {
    if (!j.at("preprocessing").is_null())
      bank.preprocessing = pca_from_json(j.at("preprocessing"));
    for (const auto& entry : j.at("classes"))
      bank.add(entry.at("label").get<std::string>(),
               model_from_json(entry.at("model")));
  } catch (const json::exception& e) {
    throw std::invalid_argument("'" + path + "' is not a valid bank file: " + e.what());
  }
  return bank;
}

// --- PCA ---------------------------------------------------------------

namespace {
std::vector<Vec> pooled_present(const Dataset& data) {
  std::vector<Vec> frames;
  for (const auto& s : data)
    for (const auto& f : s.frames)
      if (f) frames.push_back(*f);
  return frames;
}

PcaTransform pca_from_pooled(const std::vector<Vec>& frames, int target_dim) {
  const int n = static_cast<int>(frames.size());
  const int dim = static_cast<int>(frames[0].size());
  if (target_dim < 1 || target_dim > dim)
    throw std::invalid_argument("pca_fit: target_dim must lie in [1, D]");
  if (n <= target_dim)
    throw std::invalid_argument("pca_fit: need more frames than target_dim");

  Vec mean = Vec::Zero(dim);
  for (const Vec& f : frames) mean += f;
  mean /= n;
  Mat cov = Mat::Zero(dim, dim);
  for (const Vec& f : frames) {
    const Vec d = f - mean;
    cov += d * d.transpose();
  }
  cov /= n;

  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("pca_fit: eigendecomposition failed");

  PcaTransform t;
  t.mean = mean;
  t.components.resize(target_dim, dim);
  t.eigenvalues.resize(target_dim);
  for (int r = 0; r < target_dim; ++r) {
    const int src = dim - 1 - r;  // solver orders eigenvalues ascending
    Vec axis = eig.eigenvectors().col(src);
    int peak = 0;
    for (int i = 1; i < dim; ++i)
      if (std::abs(axis(i)) > std::abs(axis(peak))) peak = i;
    if (axis(peak) < 0.0) axis = -axis;
    t.components.row(r) = axis.transpose();
    t.eigenvalues(r) = eig.eigenvalues()(src);
  }
  return t;
}
}  // namespace

PcaTransform pca_fit(const Dataset& data, int target_dim) {
  const std::vector<Vec> frames = pooled_present(data);
  if (frames.empty()) throw std::invalid_argument("pca_fit: no present frames");
  return pca_from_pooled(frames, target_dim);
}

PcaTransform pca_fit_variance(const Dataset& data, double fraction) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("pca_fit_variance: fraction must lie in (0, 1]");
  const std::vector<Vec> frames = pooled_present(data);
  if (frames.empty()) throw std::invalid_argument("pca_fit: no present frames");
  const int dim = static_cast<int>(frames[0].size());
  PcaTransform full = pca_from_pooled(frames, dim);
  const double total = full.eigenvalues.sum();
  int keep = dim;
  if (total > 0.0) {
    double acc = 0.0;
    for (int r = 0; r < dim; ++r) {
      acc += full.eigenvalues(r);
      if (acc / total >= fraction) {
        keep = r + 1;
        break;
      }
    }
  }
  PcaTransform t;
  t.mean = full.mean;
  t.components = full.components.topRows(keep);
  t.eigenvalues = full.eigenvalues.head(keep);
  return t;
}

SequenceRecord pca_apply(const PcaTransform& t, const SequenceRecord& s) {
  SequenceRecord out;
  out.id = s.id;
  out.label = s.label;
  out.frames.reserve(s.frames.size());
  for (const auto& f : s.frames) {
    if (!f) {
      out.frames.emplace_back(std::nullopt);
      continue;
    }
    if (f->size() != t.mean.size())
      throw std::invalid_argument("pca_apply: frame dimension does not match transform");
    out.frames.emplace_back(t.components * (*f - t.mean));
  }
  return out;
}

Dataset pca_apply(const PcaTransform& t, const Dataset& data) {
  Dataset out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(pca_apply(t, s));
  return out;
}

// --- Masking and generation ---------------------------------------------

Dataset mask_missing(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0) || fraction >= 1.0)
    throw std::invalid_argument("mask_missing: fraction must lie in [0, 1)");
  Dataset out = data;
  for (size_t s = 0; s < out.size(); ++s) {
    const int T = out[s].length();
    int n_mask = static_cast<int>(std::llround(fraction * T));
    n_mask = std::min(n_mask, T - 1);  // the first frame is never masked
    if (n_mask <= 0) continue;
    Rng rng(derive_seed(seed, s));
    for (int pos : rng.sample_without_replacement(T - 1, n_mask))
      out[s].frames[pos + 1] = std::nullopt;
  }
  return out;
}

int GeneratorSpec::dim() const {
  if (means.empty() || means[0].empty()) return 0;
  return static_cast<int>(means[0][0].size());
}

void GeneratorSpec::validate() const {
  const int N = n_states(), K = max_lag(), M = n_components(), D = dim();
  if (N < 1 || K < 1 || M < 1 || D < 1)
    throw std::invalid_argument("GeneratorSpec: N, K, M, D must all be >= 1");
  auto check_rows = [](const Mat& m, const char* name) {
    if (!m.allFinite() || (m.array() < 0.0).any())
      throw std::invalid_argument(std::string("GeneratorSpec: ") + name +
                                  " must be non-negative");
    for (int i = 0; i < m.rows(); ++i)
      if (std::abs(m.row(i).sum() - 1.0) > 1e-12)
        throw std::invalid_argument(std::string("GeneratorSpec: rows of ") + name +
                                    " must sum to 1");
  };
  auto check_vec = [](const Vec& v, const char* name) {
    if (!v.allFinite() || (v.array() < 0.0).any() || std::abs(v.sum() - 1.0) > 1e-12)
      throw std::invalid_argument(std::string("GeneratorSpec: ") + name +
                                  " must be a probability vector");
  };
  check_vec(pi_hat, "pi_hat");
  if (A_hat.rows() != K || A_hat.cols() != K)
    throw std::invalid_argument("GeneratorSpec: A_hat must be K x K");
  check_rows(A_hat, "A_hat");
  check_vec(pi, "pi");
  if (static_cast<int>(A_dep.size()) != K)
    throw std::invalid_argument("GeneratorSpec: A_dep must hold one matrix per lag");
  for (const Mat& a : A_dep) {
    if (a.rows() != N || a.cols() != N)
      throw std::invalid_argument("GeneratorSpec: A_dep matrices must be N x N");
    check_rows(a, "A_dep");
  }
  if (weights.rows() != N) throw std::invalid_argument("GeneratorSpec: weights must be N x M");
  check_rows(weights, "weights");
  if (static_cast<int>(means.size()) != N || static_cast<int>(covs.size()) != N)
    throw std::invalid_argument("GeneratorSpec: means/covs must have one row per state");
  for (int i = 0; i < N; ++i) {
    if (static_cast<int>(means[i].size()) != M || static_cast<int>(covs[i].size()) != M)
      throw std::invalid_argument("GeneratorSpec: ragged means/covs grid");
    for (int m = 0; m < M; ++m) {
      if (means[i][m].size() != D || covs[i][m].rows() != D || covs[i][m].cols() != D)
        throw std::invalid_argument("GeneratorSpec: component shapes disagree");
      Eigen::LLT<Mat> llt(covs[i][m]);
      if (llt.info() != Eigen::Success)
        throw std::invalid_argument("GeneratorSpec: covariances must be positive definite");
    }
  }
}

GeneratorSpec generator_spec_from_json_file(const std::string& path) {
  json j = read_json_file(path);
  GeneratorSpec spec;
  try {
    spec.pi_hat = vec_from_json(j.at("pi_hat"), "pi_hat");
    spec.A_hat = mat_from_json(j.at("A_hat"), "A_hat");
    spec.pi = vec_from_json(j.at("pi"), "pi");
    for (const auto& a : j.at("A_dep")) spec.A_dep.push_back(mat_from_json(a, "A_dep"));
    spec.weights = mat_from_json(j.at("weights"), "weights");
    for (const auto& row : j.at("means")) {
      std::vector<Vec> r;
      for (const auto& m : row) r.push_back(vec_from_json(m, "means"));
      spec.means.push_back(std::move(r));
    }
    for (const auto& row : j.at("covs")) {
      std::vector<Mat> r;
      for (const auto& c : row) r.push_back(mat_from_json(c, "covs"));
      spec.covs.push_back(std::move(r));
    }
    if (j.contains("label") && !j.at("label").is_null())
      spec.label = j.at("label").get<std::string>();
  } catch (const json::exception& e) {
    throw std::invalid_argument("'" + path + "' is not a valid generator spec: " +
                                e.what());
  }
  spec.validate();
  return spec;
}

GeneratedData generate(const GeneratorSpec& spec, int count, int frames,
                       std::uint64_t seed, const std::string& id_prefix) {
  spec.validate();
  if (count < 0 || frames < 1)
    throw std::invalid_argument("generate: count must be >= 0 and frames >= 1");
  const int N = spec.n_states(), K = spec.max_lag(), D = spec.dim();

  std::vector<std::vector<Mat>> chol(N);
  for (int i = 0; i < N; ++i)
    for (const Mat& c : spec.covs[i])
      chol[i].push_back(Eigen::LLT<Mat>(c).matrixL());

  GeneratedData out;
  for (int s = 0; s < count; ++s) {
    Rng rng(derive_seed(seed, s));
    SequenceRecord rec;
    rec.id = id_prefix + std::to_string(s);
    rec.label = spec.label;
    std::vector<int> lags(frames), states(frames);
    for (int t = 0; t < frames; ++t) {
      if (t == 0) {
        lags[0] = 1;
        states[0] = rng.categorical(spec.pi);
      } else {
        const int feasible = std::min(K, t);
        const Vec row = spec.A_hat.row(lags[t - 1] - 1).head(feasible);
        lags[t] = 1 + rng.categorical(row);
        const int source = states[t - lags[t]];
        states[t] = rng.categorical(spec.A_dep[lags[t] - 1].row(source).transpose());
      }
      const int comp = rng.categorical(spec.weights.row(states[t]).transpose());
      Vec noise(D);
      for (int d = 0; d < D; ++d) noise(d) = rng.gaussian();
      rec.frames.emplace_back(spec.means[states[t]][comp] +
                              chol[states[t]][comp] * noise);
    }
    out.data.push_back(std::move(rec));
    out.lags.push_back(std::move(lags));
    out.states.push_back(std::move(states));
  }
  return out;
}

}  // namespace cdhmm
