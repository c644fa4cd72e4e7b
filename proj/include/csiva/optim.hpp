#ifndef CSIVA_OPTIM_HPP
#define CSIVA_OPTIM_HPP

#include <cmath>
#include <deque>
#include <functional>
#include <string>

#include "csiva/rng.hpp"
#include "csiva/tensor.hpp"

namespace csiva::num {

// Owns all trainable parameters of a model. Deque keeps Param addresses
// stable so graphs may hold Param pointers across additions.
template <class Real>
class ParamStore {
 public:
  Param<Real>& add(const std::string& name, Shape shape) {
    if (find(name)) throw ValidationError("param store: duplicate name " + name);
    params_.push_back(Param<Real>{name, shape,
                                  std::vector<Real>(static_cast<size_t>(shape.size()), Real(0)),
                                  std::vector<Real>(static_cast<size_t>(shape.size()), Real(0))});
    return params_.back();
  }

  Param<Real>& add(const std::string& name, Shape shape, Rng& rng, double stddev) {
    Param<Real>& p = add(name, shape);
    for (Real& w : p.w) w = static_cast<Real>(stddev * rng.normal());
    return p;
  }

  Param<Real>* find(const std::string& name) {
    for (Param<Real>& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  void zero_grad() {
    for (Param<Real>& p : params_)
      for (Real& g : p.g) g = Real(0);
  }

  size_t count() const { return params_.size(); }
  int64_t scalar_count() const {
    int64_t n = 0;
    for (const Param<Real>& p : params_) n += p.shape.size();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Param<Real>> params_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // 0 disables global-norm gradient clipping
};

// Adam with bias correction. step() consumes and zeroes the gradients.
template <class Real>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {
    if (!(cfg.lr > 0)) throw ValidationError("adam: lr must be > 0");
  }

  const AdamConfig& config() const { return cfg_; }

  void step(ParamStore<Real>& store) {
    if (m_.empty()) {
      for (Param<Real>& p : store) {
        m_.emplace_back(p.w.size(), Real(0));
        v_.emplace_back(p.w.size(), Real(0));
      }
    }
    ++t_;
    if (cfg_.clip_norm > 0) {
      double sq = 0;
      for (Param<Real>& p : store)
        for (Real g : p.g) sq += double(g) * double(g);
      double norm = std::sqrt(sq);
      if (norm > cfg_.clip_norm) {
        Real scale = static_cast<Real>(cfg_.clip_norm / norm);
        for (Param<Real>& p : store)
          for (Real& g : p.g) g *= scale;
      }
    }
    double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    size_t pi = 0;
    for (Param<Real>& p : store) {
      std::vector<Real>& m = m_[pi];
      std::vector<Real>& v = v_[pi];
      ++pi;
      for (size_t i = 0; i < p.w.size(); ++i) {
        double g = double(p.g[i]);
        double mi = cfg_.beta1 * double(m[i]) + (1.0 - cfg_.beta1) * g;
        double vi = cfg_.beta2 * double(v[i]) + (1.0 - cfg_.beta2) * g * g;
        m[i] = static_cast<Real>(mi);
        v[i] = static_cast<Real>(vi);
        double update = cfg_.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg_.eps);
        p.w[i] = static_cast<Real>(double(p.w[i]) - update);
        p.g[i] = Real(0);
      }
    }
  }

  int64_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<Real>> m_, v_;
};

}  // namespace csiva::num

#endif  // CSIVA_OPTIM_HPP
