// SPDX-License-Identifier: Apache-2.0
//
// Named parameter tensors with deterministic per-key initialization, the
// tape binding used during forward passes, and the Adam optimizer.
// Initialization derives a stream from (init_seed, key hash), so creation
// order does not affect the values.

#ifndef SEMIMO_PARAMS_HPP
#define SEMIMO_PARAMS_HPP

#include <map>
#include <string>
#include <utility>

#include "semimo/array_io.hpp"
#include "semimo/autodiff.hpp"
#include "semimo/common.hpp"
#include "semimo/random.hpp"

namespace semimo::nn {

enum class Init { Zero, One, TruncNormal };

using GradMap = std::map<std::string, RMat>;

class ModelParams {
 public:
  explicit ModelParams(std::uint64_t init_seed = 0) : init_seed_(init_seed) {}

  std::uint64_t init_seed() const { return init_seed_; }

  bool contains(const std::string& key) const { return tensors_.count(key) != 0; }

  RMat& at(const std::string& key) {
    auto it = tensors_.find(key);
    require(it != tensors_.end(), "ModelParams: unknown key " + key);
    return it->second;
  }
  const RMat& at(const std::string& key) const {
    auto it = tensors_.find(key);
    require(it != tensors_.end(), "ModelParams: unknown key " + key);
    return it->second;
  }

  /// Returns the tensor for `key`, creating and initializing it on first use.
  RMat& ensure(const std::string& key, int rows, int cols, Init init) {
    auto it = tensors_.find(key);
    if (it != tensors_.end()) {
      require(it->second.rows() == rows && it->second.cols() == cols,
              "ModelParams: shape conflict for " + key);
      return it->second;
    }
    RMat m(rows, cols);
    switch (init) {
      case Init::Zero:
        m.setZero();
        break;
      case Init::One:
        m.setOnes();
        break;
      case Init::TruncNormal: {
        RandomSource rng(init_seed_, detail::fnv1a(key));
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j) {
            double z = rng.gauss();
            while (std::abs(z) > 2.0) z = rng.gauss();
            m(i, j) = 0.02 * z;
          }
        break;
      }
    }
    return tensors_.emplace(key, std::move(m)).first->second;
  }

  std::map<std::string, RMat>& tensors() { return tensors_; }
  const std::map<std::string, RMat>& tensors() const { return tensors_; }

  std::size_t n_scalars() const {
    std::size_t n = 0;
    for (const auto& [k, v] : tensors_) n += static_cast<std::size_t>(v.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& [k, v] : tensors_)
      if (!v.allFinite()) return false;
    return true;
  }

  /// Checkpoint: keys in sorted order, f64 payloads, manifest carries
  /// init_seed plus caller metadata. Round-trips bit-exactly.
  void save(const std::string& path, io::json extra_meta = io::json::object()) const {
    io::ArrayContainer c;
    extra_meta["init_seed"] = init_seed_;
    c.meta = std::move(extra_meta);
    for (const auto& [key, tensor] : tensors_) c.arrays.push_back(io::from_rmat(key, tensor));
    io::save_container(c, path);
  }

  static ModelParams load(const std::string& path) {
    io::ArrayContainer c = io::load_container(path);
    ModelParams p(c.meta.value("init_seed", std::uint64_t{0}));
    for (const auto& a : c.arrays) p.tensors_[a.name] = io::to_rmat(a);
    return p;
  }

 private:
  std::uint64_t init_seed_;
  std::map<std::string, RMat> tensors_;
};

/// Binds ModelParams tensors to leaves of one tape. Repeated requests for
/// the same key return the same leaf, so shared parameters accumulate
/// gradients through every use.
class ParamContext {
 public:
  ParamContext(ag::Tape& tape, ModelParams& params, bool train = true)
      : tape_(tape), params_(params), train_(train) {}

  ag::Expr p(const std::string& key, int rows, int cols, Init init) {
    auto it = bound_.find(key);
    if (it != bound_.end()) return it->second;
    RMat& tensor = params_.ensure(key, rows, cols, init);
    ag::Expr e = train_ ? tape_.leaf(tensor) : tape_.constant(tensor);
    bound_.emplace(key, e);
    return e;
  }

  /// After backward(): adds d(loss)/d(tensor) into `grads` for every bound key.
  void collect(GradMap& grads) {
    for (const auto& [key, e] : bound_) {
      const RMat& g = tape_.grad(e);
      auto it = grads.find(key);
      if (it == grads.end())
        grads.emplace(key, g);
      else
        it->second += g;
    }
  }

  ag::Tape& tape() { return tape_; }
  ModelParams& params() { return params_; }
  bool training() const { return train_; }

  // Dropout stream; required only when a block runs with dropout_rate > 0.
  RandomSource* dropout_rng = nullptr;

 private:
  ag::Tape& tape_;
  ModelParams& params_;
  bool train_;
  std::map<std::string, ag::Expr> bound_;
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ModelParams& params, const GradMap& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (const auto& [key, g] : grads) {
      RMat& w = params.at(key);
      RMat& m = moment1_.try_emplace(key, RMat::Zero(g.rows(), g.cols())).first->second;
      RMat& v = moment2_.try_emplace(key, RMat::Zero(g.rows(), g.cols())).first->second;
      m = b1_ * m + (1.0 - b1_) * g;
      v = b2_ * v + (1.0 - b2_) * g.cwiseProduct(g);
      RMat mhat = m / bc1;
      RMat vhat = v / bc2;
      w.array() -= lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  std::map<std::string, RMat> moment1_, moment2_;
};

}  // namespace semimo::nn

#endif  // SEMIMO_PARAMS_HPP
