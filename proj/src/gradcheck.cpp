// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecct/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "ecct/fusion.hpp"
#include "ecct/losses.hpp"
#include "ecct/nn.hpp"
#include "ecct/rng.hpp"

namespace ecct::gradcheck {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using nn::DenseNetd;

DenseNetd random_net(Index in, Index out, Rng& rng) {
  std::uniform_int_distribution<int> depth(1, 3);
  std::uniform_int_distribution<Index> width(2, 6);
  std::vector<nn::LayerSpec> specs;
  const int d = depth(rng);
  for (int i = 0; i + 1 < d; ++i) specs.push_back({width(rng), nn::Activation::kRelu});
  specs.push_back({out, nn::Activation::kIdentity});
  DenseNetd net(in, specs);
  net.initialize(rng);
  // Nonzero biases keep the check away from symmetric configurations.
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& l : net.mutable_layers())
    for (Index i = 0; i < l.bias.size(); ++i) l.bias(i) = g(rng);
  return net;
}

MatrixXd random_matrix(Index r, Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  MatrixXd m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

std::vector<int> random_labels(Index n, int classes, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, classes - 1);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (auto& v : y) v = pick(rng);
  return y;
}

/// Flattened parameters of several nets, set and read as one vector.
struct ParamView {
  std::vector<DenseNetd*> nets;

  nn::VectorXd get() const {
    std::vector<double> all;
    for (auto* n : nets) {
      const nn::VectorXd p = n->serialize_params();
      all.insert(all.end(), p.data(), p.data() + p.size());
    }
    return Eigen::Map<nn::VectorXd>(all.data(), static_cast<Index>(all.size()));
  }

  void set(const nn::VectorXd& v) {
    Index pos = 0;
    for (auto* n : nets) {
      const Index k = n->parameter_count();
      n->deserialize_params(std::span<const double>(v.data() + pos, static_cast<std::size_t>(k)));
      pos += k;
    }
  }
};

nn::VectorXd flatten(const std::vector<nn::GradientSetd>& grads) {
  std::vector<double> all;
  for (const auto& g : grads)
    for (const auto& l : g.layers) {
      for (Index r = 0; r < l.weight.rows(); ++r)
        for (Index c = 0; c < l.weight.cols(); ++c) all.push_back(l.weight(r, c));
      for (Index r = 0; r < l.bias.size(); ++r) all.push_back(l.bias(r));
    }
  return Eigen::Map<nn::VectorXd>(all.data(), static_cast<Index>(all.size()));
}

struct Problem {
  ParamView params;
  std::function<double()> loss;                              // forward only
  std::function<std::vector<nn::GradientSetd>()> gradient;   // analytic, per net
};

}  // namespace

const char* to_string(Objective o) {
  switch (o) {
    case Objective::kCrossEntropy: return "cross_entropy";
    case Objective::kKd: return "kd";
    case Objective::kFilteredKd: return "filtered_kd";
    case Objective::kDeviceFused: return "device_fused";
    case Objective::kServer: return "server";
  }
  return "?";
}

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

Summary run(int cases, std::uint64_t seed, double tolerance, double step) {
  Summary summary;
  const Objective objectives[] = {Objective::kCrossEntropy, Objective::kKd, Objective::kFilteredKd,
                                  Objective::kDeviceFused, Objective::kServer};
  const double temperatures[] = {1.0, 2.0, 4.0};
  for (int i = 0; i < cases; ++i) {
    Rng rng = make_rng(seed, "gradcheck", static_cast<std::uint64_t>(i));
    CaseResult result;
    result.objective = objectives[i % 5];
    result.temperature = temperatures[(i / 5) % 3];
    std::uniform_int_distribution<int> cls(2, 5);
    std::uniform_int_distribution<Index> dim(1, 5), rows(2, 6);
    const int classes = cls(rng);
    const Index batch = rows(rng);

    loss::LossConfig cfg;
    cfg.kd_temperature = result.temperature;
    cfg.two_stage_switch_round = 0;
    cfg.alpha_d = 0.7;
    cfg.alpha_s = 1.3;
    cfg.filtered_kd = result.objective != Objective::kKd;

    DenseNetd a, b;
    Problem prob;
    const std::vector<int> labels = random_labels(batch, classes, rng);
    const MatrixXd teacher = random_matrix(batch, classes, rng, 2.0);
    switch (result.objective) {
      case Objective::kCrossEntropy:
      case Objective::kKd:
      case Objective::kFilteredKd: {
        const MatrixXd x = random_matrix(batch, dim(rng), rng);
        a = random_net(x.cols(), classes, rng);
        const Objective obj = result.objective;
        const double t = result.temperature;
        auto value_and_grad = [&a, x, labels, teacher, obj, t](bool grad) {
          const MatrixXd z = a.forward(x);
          loss::LossResult<double> l;
          if (obj == Objective::kCrossEntropy) {
            l = loss::cross_entropy<double>(z, labels);
          } else {
            const loss::RowMask mask = loss::filtered_mask<double>(teacher, labels);
            l = loss::kd_divergence<double>(z, teacher, t, obj == Objective::kFilteredKd ? &mask : nullptr);
          }
          std::vector<nn::GradientSetd> g;
          if (grad) g.push_back(a.backward(l.grad).grads);
          return std::make_pair(l.value, g);
        };
        prob.params.nets = {&a};
        prob.loss = [=] { return value_and_grad(false).first; };
        prob.gradient = [=] { return value_and_grad(true).second; };
        break;
      }
      case Objective::kDeviceFused: {
        const Index d_e = dim(rng);
        const MatrixXd x = random_matrix(batch, dim(rng), rng);
        const MatrixXd h_s = random_matrix(batch, d_e, rng);
        a = random_net(x.cols(), d_e, rng);
        b = random_net(2 * d_e, classes, rng);
        loss::TeacherLogits<double> tl{teacher, {}};
        auto value_and_grad = [&a, &b, x, h_s, tl, labels, cfg, d_e](bool grad) {
          const MatrixXd h_d = a.forward(x);
          const MatrixXd z = b.forward(fuse(h_d, h_s).fused);
          const auto obj = loss::device_loss<double>(z, &tl, labels, cfg, 0);
          std::vector<nn::GradientSetd> g;
          if (grad) {
            const auto cb = b.backward(obj.grad);
            const auto eb = a.backward(cb.input_gradient.leftCols(d_e));
            g = {eb.grads, cb.grads};
          }
          return std::make_pair(obj.value, g);
        };
        prob.params.nets = {&a, &b};
        prob.loss = [=] { return value_and_grad(false).first; };
        prob.gradient = [=] { return value_and_grad(true).second; };
        break;
      }
      case Objective::kServer: {
        const Index d_e = dim(rng);
        const MatrixXd x = random_matrix(batch, dim(rng), rng);
        const MatrixXd h_d = random_matrix(batch, d_e, rng);
        a = random_net(x.cols(), d_e, rng);
        b = random_net(2 * d_e, classes, rng);
        const Index split = batch / 2;
        std::vector<loss::TeacherLogits<double>> teachers = {{teacher.topRows(split), {}},
                                                             {teacher.bottomRows(batch - split), {}}};
        std::vector<std::vector<int>> block_labels = {{labels.begin(), labels.begin() + split},
                                                      {labels.begin() + split, labels.end()}};
        auto value_and_grad = [&a, &b, x, h_d, teachers, block_labels, cfg, d_e, split, batch](bool grad) {
          const MatrixXd h_s = a.forward(x);
          const MatrixXd z = b.forward(fuse(h_d, h_s).fused);
          const std::vector<MatrixXd> blocks = {z.topRows(split), z.bottomRows(batch - split)};
          const std::vector<const loss::TeacherLogits<double>*> tp = {&teachers[0], &teachers[1]};
          const auto obj = loss::server_loss<double>(blocks, tp, block_labels, cfg, 0);
          std::vector<nn::GradientSetd> g;
          if (grad) {
            MatrixXd full(batch, z.cols());
            full << obj.grads[0], obj.grads[1];
            const auto cb = b.backward(full);
            const auto eb = a.backward(cb.input_gradient.rightCols(d_e));
            g = {eb.grads, cb.grads};
          }
          return std::make_pair(obj.value, g);
        };
        prob.params.nets = {&a, &b};
        prob.loss = [=] { return value_and_grad(false).first; };
        prob.gradient = [=] { return value_and_grad(true).second; };
        break;
      }
    }

    const nn::VectorXd analytic = flatten(prob.gradient());
    const nn::VectorXd theta = prob.params.get();
    result.parameters = static_cast<std::size_t>(theta.size());
    for (Index k = 0; k < theta.size(); ++k) {
      nn::VectorXd t = theta;
      t(k) = theta(k) + step;
      prob.params.set(t);
      const double up = prob.loss();
      t(k) = theta(k) - step;
      prob.params.set(t);
      const double down = prob.loss();
      const double numeric = (up - down) / (2 * step);
      result.max_relative_error = std::max(result.max_relative_error, relative_error(analytic(k), numeric));
    }
    prob.params.set(theta);
    result.passed = result.max_relative_error <= tolerance;
    summary.worst = std::max(summary.worst, result.max_relative_error);
    if (!result.passed) ++summary.failures;
    summary.cases.push_back(result);
  }
  return summary;
}

}  // namespace ecct::gradcheck
