#pragma once

#include <Eigen/Dense>

#include "vmc/errors.hpp"

namespace vmc {

/// An N-frame sequence of flat d-dimensional frames, one frame per row.
/// Clean videos hold pixel values in [0,1]; latent/noisy tensors reuse the
/// same container with unconstrained values.
struct VideoTensor {
    Eigen::MatrixXd frames;  // N x d
    int height = 0;
    int width = 0;

    VideoTensor() = default;
    VideoTensor(Eigen::MatrixXd f, int h, int w)
        : frames(std::move(f)), height(h), width(w) {
        require_shape(frames.cols() == static_cast<long>(h) * w,
                      "VideoTensor: frame dim does not match height*width");
    }

    int frame_count() const { return static_cast<int>(frames.rows()); }
    int frame_dim() const { return static_cast<int>(frames.cols()); }

    double pixel(int frame, int row, int col) const {
        return frames(frame, row * width + col);
    }
    double& pixel(int frame, int row, int col) {
        return frames(frame, row * width + col);
    }
};

inline VideoTensor make_video(int n_frames, int height, int width) {
    return VideoTensor(Eigen::MatrixXd::Zero(n_frames, height * width), height, width);
}

inline void require_same_shape(const VideoTensor& a, const VideoTensor& b,
                               const char* where) {
    require_shape(a.frames.rows() == b.frames.rows() &&
                      a.frames.cols() == b.frames.cols(),
                  std::string(where) + ": video shapes differ");
}

/// Like-for-like copy with new frame data.
inline VideoTensor with_frames(const VideoTensor& proto, Eigen::MatrixXd frames) {
    return VideoTensor(std::move(frames), proto.height, proto.width);
}

inline VideoTensor clamped01(const VideoTensor& v) {
    return with_frames(v, v.frames.cwiseMax(0.0).cwiseMin(1.0));
}

}  // namespace vmc
