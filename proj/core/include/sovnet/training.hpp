#pragma once

// Optimization: the scheduled margin loss, masked-reconstruction penalty,
// Adam with per-epoch learning-rate decay, and the training/evaluation
// driver used by the CLI and the acceptance runs.

#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <vector>

#include "sovnet/config.hpp"
#include "sovnet/data.hpp"
#include "sovnet/network.hpp"

namespace sovnet {

// Margin bounds start loose and tighten at the halfway epoch.
struct MarginSchedule {
  double early_plus = 0.9, early_minus = 0.1, early_lambda = 0.5;
  double late_plus = 0.95, late_minus = 0.05, late_lambda = 0.8;

  struct Margins {
    double m_plus, m_minus, lambda;
  };
  Margins at(int epoch, int total_epochs) const {
    bool late = epoch >= (total_epochs + 1) / 2;
    return late ? Margins{late_plus, late_minus, late_lambda}
                : Margins{early_plus, early_minus, early_lambda};
  }
};

// sum_j [ T_j max(0, m+ - s_j)^2 + lambda (1 - T_j) max(0, s_j - m-)^2 ].
template <typename T>
Tensor<T> margin_loss(const Tensor<T>& scores, int label, const MarginSchedule::Margins& m) {
  if (scores.rank() != 1) throw ShapeMismatch("margin_loss: scores must be rank 1");
  std::size_t classes = scores.shape()[0];
  if (label < 0 || static_cast<std::size_t>(label) >= classes)
    throw LabelOutOfRange("margin_loss: label " + std::to_string(label));
  std::vector<T> onehot(classes, T(0));
  onehot[label] = T(1);
  Tensor<T> t = Tensor<T>::from_data({classes}, std::move(onehot), false);
  Tensor<T> pos = square(relu(sub(Tensor<T>::scalar(T(m.m_plus)), scores)));
  Tensor<T> neg = square(relu(sub(scores, Tensor<T>::scalar(T(m.m_minus)))));
  Tensor<T> one_minus_t = sub(Tensor<T>::scalar(T(1)), t);
  return reduce_sum_all(add(mul(t, pos), mul(one_minus_t, neg) * T(m.lambda)));
}

// Sum of squared pixel errors.
template <typename T>
Tensor<T> reconstruction_loss(const Tensor<T>& reconstruction, const Tensor<T>& target) {
  return reduce_sum_all(square(sub(reconstruction, target)));
}

template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.emplace_back(p->size(), T(0));
      v_.emplace_back(p->size(), T(0));
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  // Applies accumulated gradients (scaled by `grad_scale`) and zeroes them.
  void step(double grad_scale = 1.0) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor<T>& p = *params_[i];
      if (!p.has_grad()) continue;
      const auto& g = p.grad();
      auto& val = p.raw_values();
      for (std::size_t j = 0; j < val.size(); ++j) {
        double gj = static_cast<double>(g[j]) * grad_scale;
        m_[i][j] = static_cast<T>(beta1_ * m_[i][j] + (1.0 - beta1_) * gj);
        v_[i][j] = static_cast<T>(beta2_ * v_[i][j] + (1.0 - beta2_) * gj * gj);
        double mhat = m_[i][j] / bc1;
        double vhat = v_[i][j] / bc2;
        val[j] = static_cast<T>(val[j] - lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
      p.zero_grad();
    }
  }

 private:
  std::vector<Tensor<T>*> params_;
  double lr_, beta1_, beta2_, eps_;
  std::vector<std::vector<T>> m_, v_;
  long long t_ = 0;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Central finite differences against the tape for every element of every
// listed parameter. `make_loss` must rebuild the scalar loss from scratch on
// each call (it is re-evaluated after every perturbation). The relative
// error is |analytic - numeric| / max(1e-6, |analytic| + |numeric|).
template <typename T, typename MakeLoss>
GradCheckResult gradcheck(const std::vector<std::pair<std::string, Tensor<T>*>>& params,
                          MakeLoss make_loss, T h) {
  for (auto& [name, p] : params) p->zero_grad();
  Tensor<T> loss = make_loss();
  loss.backward();
  std::vector<std::vector<T>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, p] : params) analytic.push_back(p->grad());

  GradCheckResult res;
  NoGradGuard ng;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& [name, p] = params[pi];
    auto& v = p->raw_values();
    for (std::size_t j = 0; j < v.size(); ++j) {
      T saved = v[j];
      v[j] = saved + h;
      T up = make_loss().item();
      v[j] = saved - h;
      T down = make_loss().item();
      v[j] = saved;
      double numeric = static_cast<double>(up - down) / (2.0 * static_cast<double>(h));
      double a = static_cast<double>(analytic[pi][j]);
      double rel = std::abs(a - numeric) / std::max(1e-6, std::abs(a) + std::abs(numeric));
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = name;
        res.worst_index = j;
      }
      ++res.checked;
    }
  }
  return res;
}

// Fraction of correct predictions; optionally fills a classes x classes
// confusion matrix (rows: true label).
template <typename T>
double evaluate(const SovnetModel<T>& model, const Dataset& ds,
                std::vector<std::vector<long long>>* confusion = nullptr) {
  if (ds.count == 0) throw DataEmpty("evaluate: empty dataset");
  NoGradGuard ng;
  if (confusion)
    confusion->assign(model.cfg.classes, std::vector<long long>(model.cfg.classes, 0));
  long long correct = 0;
  for (int i = 0; i < ds.count; ++i) {
    int label = ds.labels[i];
    if (label < 0 || label >= model.cfg.classes)
      throw LabelOutOfRange("evaluate: label " + std::to_string(label));
    int pred = model.classify(ds.image<T>(i));
    if (pred == label) ++correct;
    if (confusion) (*confusion)[label][pred]++;
  }
  return static_cast<double>(correct) / ds.count;
}

struct EpochStats {
  int epoch;
  double lr;
  double train_loss;
  double train_acc;
  double val_acc;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  double final_val_acc = 0.0;
  bool reached_target = false;
};

// Minibatch training: gradients accumulate per sample, Adam steps with the
// batch mean, lr decays multiplicatively per epoch. Logs one line per epoch
// to `log` and, when `csv_path` is set, appends CSV rows
// epoch,lr,train_loss,train_acc,val_acc.
template <typename T>
TrainResult train(SovnetModel<T>& model, const Dataset& train_ds, const Dataset& val_ds,
                  const TrainConfig& tc, std::ostream* log = nullptr,
                  const std::string& csv_path = "") {
  if (train_ds.count == 0) throw DataEmpty("train: empty dataset");
  MarginSchedule schedule;
  Adam<T> opt(model.parameters(), tc.lr);
  std::mt19937_64 rng(tc.seed);
  std::vector<int> order(train_ds.count);
  std::iota(order.begin(), order.end(), 0);

  std::ofstream csv;
  if (!csv_path.empty()) {
    csv.open(csv_path, std::ios::trunc);
    if (!csv) throw DataEmpty("train: cannot open log file " + csv_path);
    csv << "epoch,lr,train_loss,train_acc,val_acc\n";
  }

  TrainResult result;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    opt.set_lr(tc.lr * std::pow(tc.lr_decay, epoch));
    auto margins = schedule.at(epoch, tc.epochs);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    long long correct = 0;
    int in_batch = 0;
    for (int n = 0; n < train_ds.count; ++n) {
      int i = order[n];
      Tensor<T> image = train_ds.image<T>(i);
      ForwardTrace<T> tr = model.forward(image);
      Tensor<T> loss = margin_loss(tr.scores, train_ds.labels[i], margins);
      if (tc.reconstruction)
        loss = add(loss, reconstruction_loss(model.reconstruct(tr, train_ds.labels[i]), image) *
                             T(tc.recon_weight));
      loss_sum += static_cast<double>(loss.item());
      {
        const auto& s = tr.scores.values();
        int best = 0;
        for (std::size_t j = 1; j < s.size(); ++j)
          if (s[j] > s[best]) best = static_cast<int>(j);
        if (best == train_ds.labels[i]) ++correct;
      }
      loss.backward();
      if (++in_batch == tc.batch_size || n == train_ds.count - 1) {
        opt.step(1.0 / in_batch);
        in_batch = 0;
      }
    }

    EpochStats st;
    st.epoch = epoch;
    st.lr = opt.lr();
    st.train_loss = loss_sum / train_ds.count;
    st.train_acc = static_cast<double>(correct) / train_ds.count;
    st.val_acc = val_ds.count > 0 ? evaluate(model, val_ds) : 0.0;
    result.epochs.push_back(st);
    result.final_val_acc = st.val_acc;
    if (log)
      (*log) << "epoch " << epoch << "  lr " << st.lr << "  loss " << st.train_loss << "  train_acc "
             << st.train_acc << "  val_acc " << st.val_acc << "\n";
    if (csv.is_open())
      csv << epoch << "," << st.lr << "," << st.train_loss << "," << st.train_acc << "," << st.val_acc
          << "\n"
          << std::flush;
    if (tc.target_accuracy > 0 && st.val_acc >= tc.target_accuracy) {
      result.reached_target = true;
      break;
    }
  }
  return result;
}

}  // namespace sovnet
