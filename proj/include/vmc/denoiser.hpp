#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <vector>

#include "vmc/conditioning.hpp"
#include "vmc/tensors.hpp"
#include "vmc/video.hpp"

namespace vmc {

/// Noise-prediction network over N-frame videos. Each frame is linearly
/// patch-embedded into tokens; blocks apply spatial self-attention within a
/// frame, temporal attention across frames at a fixed token position, and a
/// per-token MLP. Conditioning and a sinusoidal time embedding are added to
/// the token stream; there is no cross-attention. Single attention head.
struct DenoiserConfig {
    int height = 16;
    int width = 16;
    int patch = 4;
    int hidden_dim = 64;
    int n_blocks = 2;
    int cond_dim = vocab::kEmbedDim;
    int time_embed_dim = 32;

    int frame_dim() const { return height * width; }
    int patch_dim() const { return patch * patch; }
    int tokens_per_frame() const { return (height / patch) * (width / patch); }

    void validate() const;
    nlohmann::json to_json() const;
    static DenoiserConfig from_json(const nlohmann::json& j);
};

/// Parameters plus their partition map. Tensors labeled TEMPORAL_ATTENTION
/// are exactly the temporal attention Q/K/V projections; everything else is
/// OTHER. Forward and gradient evaluation are pure given the params.
struct DenoiserModel {
    DenoiserConfig cfg;
    NamedTensors params;
};

/// Deterministic initialization: same (cfg, seed) gives bit-identical
/// parameters.
DenoiserModel init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed);

Eigen::VectorXd time_embedding(int t, int dim);

/// Everything the backward pass needs from a forward evaluation.
struct DenoiserCache {
    int n_frames = 0;
    Eigen::MatrixXd patches;   // (N*P) x patch_dim
    Eigen::VectorXd cond;      // cond_dim
    Eigen::VectorXd t_embed;   // time_embed_dim

    struct LayerNormCache {
        Eigen::MatrixXd xhat;  // (N*P) x H
        Eigen::VectorXd inv_std;
        Eigen::MatrixXd y;     // gain * xhat + bias
    };
    struct AttentionCache {
        // One entry per group: per frame for spatial, per token position for
        // temporal. Rows of each matrix are the group's items.
        std::vector<Eigen::MatrixXd> q, k, v, attn, mix;
    };
    struct BlockCache {
        LayerNormCache sa_norm;
        AttentionCache sa;
        LayerNormCache ta_norm;
        AttentionCache ta;
        LayerNormCache mlp_norm;
        Eigen::MatrixXd mlp_pre;  // (N*P) x 4H, pre-activation
        Eigen::MatrixXd mlp_act;  // gelu(mlp_pre)
    };
    std::vector<BlockCache> blocks;
    LayerNormCache out_norm;
};

/// eps_theta(v_t, t, c): returns a tensor shaped like v_t. Requires N >= 2.
Eigen::MatrixXd predict_noise(const DenoiserModel& m, const Eigen::MatrixXd& v_t,
                              int t, const Eigen::VectorXd& cond);

inline Eigen::MatrixXd predict_noise(const DenoiserModel& m,
                                     const Eigen::MatrixXd& v_t, int t,
                                     const Conditioning& c) {
    return predict_noise(m, v_t, t, c.embedding);
}

Eigen::MatrixXd predict_noise_cached(const DenoiserModel& m,
                                     const Eigen::MatrixXd& v_t, int t,
                                     const Eigen::VectorXd& cond,
                                     DenoiserCache& cache);

/// Accumulates d(loss)/d(params) into grads given d(loss)/d(eps_pred).
void denoiser_backward(const DenoiserModel& m, const DenoiserCache& cache,
                       const Eigen::MatrixXd& d_eps, GradientBuffers& grads);

}  // namespace vmc
