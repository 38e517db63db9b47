#pragma once

#include <Eigen/Dense>
#include <string>
#include <string_view>
#include <vector>

#include "vmc/errors.hpp"

namespace vmc {

/// Partition label for selective fine-tuning. The partition is total and
/// disjoint: every tensor carries exactly one label.
enum class ParamLabel { kOther = 0, kTemporalAttention = 1 };

const char* label_name(ParamLabel l);
ParamLabel label_from_name(const std::string& s);

struct NamedTensor {
    std::string name;
    ParamLabel label = ParamLabel::kOther;
    Eigen::MatrixXd value;
};

/// Ordered collection of named parameter tensors. Order is fixed at
/// construction and defines the gradient-buffer and checkpoint layouts.
struct NamedTensors {
    std::vector<NamedTensor> items;

    int add(std::string name, long rows, long cols,
            ParamLabel label = ParamLabel::kOther) {
        items.push_back({std::move(name), label, Eigen::MatrixXd::Zero(rows, cols)});
        return static_cast<int>(items.size()) - 1;
    }

    int index_of(std::string_view name) const {
        for (std::size_t i = 0; i < items.size(); ++i)
            if (items[i].name == name) return static_cast<int>(i);
        return -1;
    }

    const Eigen::MatrixXd& at(std::string_view name) const {
        const int i = index_of(name);
        require_config(i >= 0, "no tensor named '" + std::string(name) + "'");
        return items[static_cast<std::size_t>(i)].value;
    }
    Eigen::MatrixXd& at(std::string_view name) {
        return const_cast<Eigen::MatrixXd&>(
            static_cast<const NamedTensors&>(*this).at(name));
    }

    std::size_t size() const { return items.size(); }

    std::vector<int> indices_with_label(ParamLabel l) const {
        std::vector<int> out;
        for (std::size_t i = 0; i < items.size(); ++i)
            if (items[i].label == l) out.push_back(static_cast<int>(i));
        return out;
    }

    std::vector<int> all_indices() const {
        std::vector<int> out(items.size());
        for (std::size_t i = 0; i < items.size(); ++i) out[i] = static_cast<int>(i);
        return out;
    }
};

/// Gradient accumulators aligned with a NamedTensors layout.
struct GradientBuffers {
    std::vector<Eigen::MatrixXd> g;

    explicit GradientBuffers(const NamedTensors& params) {
        g.reserve(params.size());
        for (const auto& t : params.items)
            g.emplace_back(Eigen::MatrixXd::Zero(t.value.rows(), t.value.cols()));
    }

    void zero() {
        for (auto& m : g) m.setZero();
    }

    void add_scaled(const GradientBuffers& other, double scale) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * other.g[i];
    }

    Eigen::MatrixXd& operator[](int i) { return g[static_cast<std::size_t>(i)]; }
    const Eigen::MatrixXd& operator[](int i) const {
        return g[static_cast<std::size_t>(i)];
    }
};

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Decoupled-weight-decay Adam. Only tensors listed in the update set are
/// touched; all others stay bit-identical, including their moment state.
class AdamW {
public:
    AdamW(const NamedTensors& params, AdamWConfig cfg) : cfg_(cfg) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const auto& t : params.items) {
            m_.emplace_back(Eigen::MatrixXd::Zero(t.value.rows(), t.value.cols()));
            v_.emplace_back(Eigen::MatrixXd::Zero(t.value.rows(), t.value.cols()));
        }
    }

    void step(NamedTensors& params, const GradientBuffers& grads,
              const std::vector<int>& update_set, double lr_scale = 1.0) {
        ++t_;
        const double lr = cfg_.lr * lr_scale;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (int idx : update_set) {
            auto& w = params.items[static_cast<std::size_t>(idx)].value;
            auto& m = m_[static_cast<std::size_t>(idx)];
            auto& v = v_[static_cast<std::size_t>(idx)];
            const auto& g = grads[idx];
            m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
            v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
            const Eigen::ArrayXXd m_hat = m.array() / bc1;
            const Eigen::ArrayXXd v_hat = v.array() / bc2;
            w.array() -= lr * (m_hat / (v_hat.sqrt() + cfg_.eps) +
                               cfg_.weight_decay * w.array());
        }
    }

    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    std::vector<Eigen::MatrixXd> m_, v_;
    long t_ = 0;
};

}  // namespace vmc
