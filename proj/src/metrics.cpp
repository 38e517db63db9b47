#include "vmc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vmc/io.hpp"
#include "vmc/rng.hpp"

namespace vmc {

namespace {

constexpr double kStillFloor = 0.1;  // rms px below which an axis is "still"
constexpr int kPatchHalf = 4;        // 9x9 shape patch around the centroid
constexpr int kTrackFrames = 8;

double quiet_nan() { return std::numeric_limits<double>::quiet_NaN(); }

Eigen::MatrixX2d keyframe_subsample(const Eigen::MatrixX2d& track, int target) {
    const long n = track.rows();
    if (n == target) return track;
    // 4x temporal expansion: keyframes sit at fine indexes 0,4,8,...
    require_shape(n == 4 * (static_cast<long>(target) - 1) + 1,
                  "track subsampling expects a 4x temporal expansion");
    Eigen::MatrixX2d out(target, 2);
    for (int k = 0; k < target; ++k) out.row(k) = track.row(4 * k);
    return out;
}


// ----- factor classifier internals ------------------------------------

struct FrameFeatures {
    Eigen::VectorXd v;
};

int frame_feature_dim() { return (2 * kPatchHalf + 1) * (2 * kPatchHalf + 1) + 12; }

// Translation-invariant shape/appearance/background descriptors for one
// frame: a centroid-aligned normalized patch, intensity-weighted moments,
// and background statistics.
Eigen::VectorXd frame_features(const VideoTensor& v, int f) {
    const double thr = 0.5;
    double wsum = 0, xsum = 0, ysum = 0;
    double bg_sum = 0, bg_sq = 0;
    int bg_count = 0;
    double fg_sum = 0;
    int fg_count = 0;
    std::vector<double> fg_vals;
    for (int r = 0; r < v.height; ++r)
        for (int c = 0; c < v.width; ++c) {
            const double p = v.pixel(f, r, c);
            if (p > thr) {
                wsum += p;
                xsum += p * c;
                ysum += p * r;
                fg_sum += p;
                fg_vals.push_back(p);
                ++fg_count;
            } else {
                bg_sum += p;
                bg_sq += p * p;
                ++bg_count;
            }
        }
    const bool has_fg = wsum > 0;
    const double cx = has_fg ? xsum / wsum : v.width / 2.0;
    const double cy = has_fg ? ysum / wsum : v.height / 2.0;

    double mu20 = 0, mu02 = 0, mu11 = 0, mu4 = 0;
    if (has_fg) {
        for (int r = 0; r < v.height; ++r)
            for (int c = 0; c < v.width; ++c) {
                const double p = v.pixel(f, r, c);
                if (p > thr) {
                    const double dx = c - cx, dy = r - cy;
                    mu20 += p * dx * dx;
                    mu02 += p * dy * dy;
                    mu11 += p * dx * dy;
                    mu4 += p * (dx * dx + dy * dy) * (dx * dx + dy * dy);
                }
            }
        mu20 /= wsum;
        mu02 /= wsum;
        mu11 /= wsum;
        mu4 /= wsum;
    }

    // background gradient statistics over below-threshold neighbours
    double gh = 0, gv = 0;
    int nh = 0, nv = 0;
    for (int r = 0; r < v.height; ++r)
        for (int c = 0; c + 1 < v.width; ++c) {
            const double a = v.pixel(f, r, c), b = v.pixel(f, r, c + 1);
            if (a <= thr && b <= thr) {
                gh += std::abs(a - b);
                ++nh;
            }
        }
    for (int r = 0; r + 1 < v.height; ++r)
        for (int c = 0; c < v.width; ++c) {
            const double a = v.pixel(f, r, c), b = v.pixel(f, r + 1, c);
            if (a <= thr && b <= thr) {
                gv += std::abs(a - b);
                ++nv;
            }
        }

    Eigen::VectorXd out(frame_feature_dim());
    int k = 0;
    // centroid-aligned patch, normalized by its own peak so shape decouples
    // from the intensity band
    const int ir = static_cast<int>(std::lround(cy));
    const int ic = static_cast<int>(std::lround(cx));
    double peak = 0.0;
    for (int dr = -kPatchHalf; dr <= kPatchHalf; ++dr)
        for (int dc = -kPatchHalf; dc <= kPatchHalf; ++dc) {
            const int r = ir + dr, c = ic + dc;
            double p = 0.0;
            if (r >= 0 && r < v.height && c >= 0 && c < v.width)
                p = std::max(0.0, v.pixel(f, r, c) - thr);
            peak = std::max(peak, p);
        }
    for (int dr = -kPatchHalf; dr <= kPatchHalf; ++dr)
        for (int dc = -kPatchHalf; dc <= kPatchHalf; ++dc) {
            const int r = ir + dr, c = ic + dc;
            double p = 0.0;
            if (r >= 0 && r < v.height && c >= 0 && c < v.width)
                p = std::max(0.0, v.pixel(f, r, c) - thr);
            out[k++] = peak > 0 ? p / peak : 0.0;
        }

    const double bg_mean = bg_count ? bg_sum / bg_count : 0.0;
    out[k++] = has_fg ? fg_sum / std::max(1, fg_count) : 0.0;  // fg intensity
    // interior (peak) intensity: mean of the top quartile, immune to the
    // coverage-blended edge pixels
    double fg_peak = 0.0;
    if (!fg_vals.empty()) {
        std::sort(fg_vals.begin(), fg_vals.end(), std::greater<double>());
        const std::size_t top = std::max<std::size_t>(1, fg_vals.size() / 4);
        for (std::size_t i = 0; i < top; ++i) fg_peak += fg_vals[i];
        fg_peak /= static_cast<double>(top);
    }
    out[k++] = fg_peak;
    out[k++] = fg_count / static_cast<double>(v.height * v.width);
    out[k++] = std::sqrt(std::max(0.0, mu20 + mu02));  // radius of gyration
    out[k++] = mu20 - mu02;                            // anisotropy
    out[k++] = mu11;
    const double r2 = mu20 + mu02;
    out[k++] = r2 > 0 ? mu4 / (r2 * r2) : 0.0;  // radial kurtosis (ring-ness)
    out[k++] = bg_mean;
    out[k++] = bg_count ? std::sqrt(std::max(0.0, bg_sq / bg_count - bg_mean * bg_mean))
                        : 0.0;
    out[k++] = nh ? gh / nh : 0.0;
    out[k++] = nv ? gv / nv : 0.0;
    out[k++] = 1.0;  // bias
    return out;
}

int track_feature_dim() { return 17; }

// Phase-free trajectory descriptors: motion classes are defined by the
// shape of the step sequence, not by where in its cycle a clip starts.
Eigen::VectorXd track_features(const VideoTensor& v) {
    CentroidTrack track = extract_centroid_track(v);
    Eigen::MatrixX2d pos = keyframe_subsample(track.pos, kTrackFrames);
    // normalize to the 16px reference so 2x outputs score identically
    pos *= 16.0 / v.width;
    const int ns = kTrackFrames - 1;
    Eigen::MatrixXd d(ns, 2);
    for (int i = 0; i < ns; ++i) d.row(i) = pos.row(i + 1) - pos.row(i);

    const double net_x = pos(kTrackFrames - 1, 0) - pos(0, 0);
    const double net_y = pos(kTrackFrames - 1, 1) - pos(0, 1);
    Eigen::VectorXd lens(ns);
    for (int i = 0; i < ns; ++i) lens[i] = d.row(i).norm();
    const double mean_len = std::max(1e-9, lens.mean());
    const double len_cv =
        std::sqrt((lens.array() - mean_len).square().mean()) / mean_len;
    double cross_sum = 0.0, cross_abs = 0.0;
    for (int i = 0; i + 1 < ns; ++i) {
        const double cr = d(i, 0) * d(i + 1, 1) - d(i, 1) * d(i + 1, 0);
        cross_sum += cr;
        cross_abs += std::abs(cr);
    }
    const Eigen::RowVector2d center = pos.colwise().mean();
    Eigen::VectorXd radii(kTrackFrames);
    for (int i = 0; i < kTrackFrames; ++i) radii[i] = (pos.row(i) - center).norm();
    const double mean_r = std::max(1e-9, radii.mean());
    const double radial_cv =
        std::sqrt((radii.array() - mean_r).square().mean()) / mean_r;

    Eigen::VectorXd out(track_feature_dim());
    int k = 0;
    out[k++] = net_x;
    out[k++] = net_y;
    out[k++] = std::abs(net_x);
    out[k++] = std::abs(net_y);
    out[k++] = d.col(0).maxCoeff();
    out[k++] = d.col(0).minCoeff();
    out[k++] = d.col(1).maxCoeff();
    out[k++] = d.col(1).minCoeff();
    out[k++] = d.col(0).cwiseAbs().sum();  // path length per axis
    out[k++] = d.col(1).cwiseAbs().sum();
    out[k++] = pos.col(0).maxCoeff() - pos.col(0).minCoeff();
    out[k++] = pos.col(1).maxCoeff() - pos.col(1).minCoeff();
    out[k++] = cross_sum / std::max(1, ns - 1);
    out[k++] = cross_abs / std::max(1, ns - 1);
    out[k++] = len_cv;
    out[k++] = radial_cv;
    out[k++] = 1.0;  // bias
    return out;
}

struct HeadSpec {
    const char* name;
    int classes;
    bool on_track;  // motion head reads track features, others frame features
};

const HeadSpec kHeads[] = {
    {"motion", vocab::kMotionCount, true},
    {"shape", vocab::kShapeCount, false},
    {"intensity", vocab::kIntensityCount, false},
    {"texture", vocab::kTextureCount, false},
    {"level", vocab::kLevelCount, false},
};

int head_label(const StructuredPrompt& p, int head) {
    switch (head) {
        case 0: return p.motion;
        case 1: return p.shape ? *p.shape : -1;
        case 2: return p.intensity ? *p.intensity : -1;
        case 3: return p.texture ? *p.texture : -1;
        case 4: return p.level ? *p.level : -1;
    }
    return -1;
}

Eigen::VectorXd softmax_vec(const Eigen::VectorXd& z) {
    const double m = z.maxCoeff();
    Eigen::VectorXd e = (z.array() - m).exp();
    return e / e.sum();
}

// Standardize (except the trailing bias column) with train statistics.
void standardize_inplace(Eigen::MatrixXd& x, const Eigen::RowVectorXd& mean,
                         const Eigen::RowVectorXd& stdev) {
    for (long c = 0; c + 1 < x.cols(); ++c)
        x.col(c) = (x.col(c).array() - mean[c]) / stdev[c];
}

Eigen::MatrixXd train_softmax_head(const Eigen::MatrixXd& x,
                                   const std::vector<int>& labels, int classes,
                                   int epochs, double lr) {
    const long n = x.rows(), f = x.cols();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(f, classes);
    AdamWConfig ocfg;
    ocfg.lr = lr;
    ocfg.weight_decay = 1e-4;
    NamedTensors holder;
    holder.add("w", f, classes);
    AdamW opt(holder, ocfg);
    GradientBuffers grads(holder);
    for (int e = 0; e < epochs; ++e) {
        Eigen::MatrixXd logits = x * holder.items[0].value;
        Eigen::MatrixXd probs(n, classes);
        for (long i = 0; i < n; ++i)
            probs.row(i) = softmax_vec(logits.row(i).transpose()).transpose();
        for (long i = 0; i < n; ++i) probs(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
        grads.g[0] = x.transpose() * probs / static_cast<double>(n);
        opt.step(holder, grads, {0});
    }
    return holder.items[0].value;
}

}  // namespace

double motion_preservation(const VideoTensor& source, const VideoTensor& generated) {
    const CentroidTrack ts = extract_centroid_track(source);
    const CentroidTrack tg = extract_centroid_track(generated);
    if (!ts.any_valid || !tg.any_valid) return quiet_nan();

    const int n = source.frame_count();
    // common 16px reference scale so 2x-resolution outputs compare directly
    Eigen::MatrixX2d ps = ts.pos * (16.0 / source.width);
    Eigen::MatrixX2d pg = keyframe_subsample(tg.pos, n) * (16.0 / generated.width);

    // per-frame displacement vectors
    Eigen::MatrixXd ds(n - 1, 2), dg(n - 1, 2);
    for (int i = 1; i < n; ++i) {
        ds.row(i - 1) = ps.row(i) - ps.row(i - 1);
        dg.row(i - 1) = pg.row(i) - pg.row(i - 1);
    }

    // Correlation about the origin (zero displacement is the natural
    // reference), per component; an axis that is still in either track
    // (sub-pixel rms) is skipped.
    const double floor_sq = kStillFloor * kStillFloor * (n - 1);
    double total = 0.0;
    int kept = 0;
    for (int axis = 0; axis < 2; ++axis) {
        const double na2 = ds.col(axis).squaredNorm();
        const double nb2 = dg.col(axis).squaredNorm();
        if (na2 < floor_sq || nb2 < floor_sq) continue;
        total += ds.col(axis).dot(dg.col(axis)) / std::sqrt(na2 * nb2);
        ++kept;
    }
    if (kept == 0) return quiet_nan();
    return total / kept;
}

double frame_consistency(const VideoTensor& v, int* skipped_pairs) {
    const int n = v.frame_count();
    require_config(n >= 2, "frame_consistency: need N >= 2");
    Eigen::MatrixXd centered = v.frames;
    for (int i = 0; i < n; ++i) centered.row(i).array() -= v.frames.row(i).mean();

    double total = 0.0;
    int pairs = 0, skipped = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double ni = centered.row(i).norm();
            const double nj = centered.row(j).norm();
            if (ni < 1e-12 || nj < 1e-12) {
                ++skipped;
                continue;
            }
            const double cos = centered.row(i).dot(centered.row(j)) / (ni * nj);
            total += 0.5 * (1.0 + cos);
            ++pairs;
        }
    if (skipped_pairs) *skipped_pairs = skipped;
    if (pairs == 0) return quiet_nan();
    return total / pairs;
}

double FactorClassifier::min_heldout_accuracy() const {
    double m = 1.0;
    if (!meta.contains("heldout_accuracy")) return 0.0;
    for (const auto& [key, val] : meta.at("heldout_accuracy").items())
        m = std::min(m, val.get<double>());
    return m;
}

FactorClassifier train_factor_classifier(
    const std::vector<std::pair<VideoTensor, StructuredPrompt>>& corpus,
    const ClassifierTrainConfig& cfg) {
    require_config(corpus.size() >= 10, "classifier: corpus too small");

    // split
    Rng rng(mix_seed(cfg.seed, 0xCF));
    std::vector<int> order(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) order[i] = static_cast<int>(i);
    for (std::size_t i = corpus.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }
    const auto n_held = static_cast<std::size_t>(
        std::max(1.0, cfg.heldout_fraction * static_cast<double>(corpus.size())));
    std::vector<int> train_ids(order.begin(), order.end() - static_cast<long>(n_held));
    std::vector<int> held_ids(order.end() - static_cast<long>(n_held), order.end());

    // frame-level features (one row per frame) and track features (per clip)
    auto collect_frames = [&](const std::vector<int>& ids, Eigen::MatrixXd& x,
                              std::vector<int>& clip_of_row) {
        std::vector<Eigen::VectorXd> rows;
        for (int id : ids) {
            const auto& v = corpus[static_cast<std::size_t>(id)].first;
            for (int f = 0; f < v.frame_count(); ++f) {
                rows.push_back(frame_features(v, f));
                clip_of_row.push_back(id);
            }
        }
        x.resize(static_cast<long>(rows.size()), frame_feature_dim());
        for (std::size_t i = 0; i < rows.size(); ++i)
            x.row(static_cast<long>(i)) = rows[i].transpose();
    };

    Eigen::MatrixXd xf_train;
    std::vector<int> clip_of_row;
    collect_frames(train_ids, xf_train, clip_of_row);
    Eigen::MatrixXd xt_train(train_ids.size(), track_feature_dim());
    for (std::size_t i = 0; i < train_ids.size(); ++i)
        xt_train.row(static_cast<long>(i)) =
            track_features(corpus[static_cast<std::size_t>(train_ids[i])].first)
                .transpose();

    // standardization stats (bias column kept at scale 1)
    auto stats = [](const Eigen::MatrixXd& x, Eigen::RowVectorXd& mean,
                    Eigen::RowVectorXd& stdev) {
        mean = x.colwise().mean();
        stdev.resize(x.cols());
        for (long c = 0; c < x.cols(); ++c) {
            const double var = (x.col(c).array() - mean[c]).square().mean();
            stdev[c] = std::sqrt(var) > 1e-9 ? std::sqrt(var) : 1.0;
        }
    };
    Eigen::RowVectorXd fmean, fstd, tmean, tstd;
    stats(xf_train, fmean, fstd);
    stats(xt_train, tmean, tstd);
    standardize_inplace(xf_train, fmean, fstd);
    standardize_inplace(xt_train, tmean, tstd);

    FactorClassifier clf;
    auto add_row_vector = [&](const std::string& name, const Eigen::RowVectorXd& v) {
        const int idx = clf.params.add(name, 1, v.size());
        clf.params.items[static_cast<std::size_t>(idx)].value.row(0) = v;
    };
    add_row_vector("frame.mean", fmean);
    add_row_vector("frame.std", fstd);
    add_row_vector("track.mean", tmean);
    add_row_vector("track.std", tstd);

    nlohmann::json accs;
    for (int h = 0; h < 5; ++h) {
        const auto& spec = kHeads[h];
        const Eigen::MatrixXd& x = spec.on_track ? xt_train : xf_train;
        std::vector<int> labels;
        if (spec.on_track) {
            for (int id : train_ids)
                labels.push_back(
                    head_label(corpus[static_cast<std::size_t>(id)].second, h));
        } else {
            for (int id : clip_of_row)
                labels.push_back(
                    head_label(corpus[static_cast<std::size_t>(id)].second, h));
        }
        for (int l : labels)
            require_config(l >= 0, "classifier: corpus prompt missing a factor");
        const Eigen::MatrixXd w =
            train_softmax_head(x, labels, spec.classes, cfg.epochs, cfg.lr);
        const int idx = clf.params.add(std::string("head.") + spec.name, w.rows(),
                                       w.cols());
        clf.params.items[static_cast<std::size_t>(idx)].value = w;
    }

    // held-out accuracy per head, measured on whole clips
    std::vector<int> correct(5, 0);
    for (int id : held_ids) {
        const auto& [v, p] = corpus[static_cast<std::size_t>(id)];
        const FactorProbs probs = classify_factors(v, clf);
        const Eigen::VectorXd* by_head[5] = {&probs.motion, &probs.shape,
                                             &probs.intensity, &probs.texture,
                                             &probs.level};
        for (int h = 0; h < 5; ++h) {
            int argmax = 0;
            by_head[h]->maxCoeff(&argmax);
            if (argmax == head_label(p, h)) ++correct[static_cast<std::size_t>(h)];
        }
    }
    for (int h = 0; h < 5; ++h)
        accs[kHeads[h].name] =
            correct[static_cast<std::size_t>(h)] / static_cast<double>(held_ids.size());
    clf.meta["heldout_accuracy"] = accs;
    clf.meta["n_train_clips"] = train_ids.size();
    clf.meta["n_heldout_clips"] = held_ids.size();
    return clf;
}

FactorProbs classify_factors(const VideoTensor& v, const FactorClassifier& clf) {
    const Eigen::RowVectorXd fmean = clf.params.at("frame.mean").row(0);
    const Eigen::RowVectorXd fstd = clf.params.at("frame.std").row(0);
    const Eigen::RowVectorXd tmean = clf.params.at("track.mean").row(0);
    const Eigen::RowVectorXd tstd = clf.params.at("track.std").row(0);

    Eigen::MatrixXd xf(v.frame_count(), frame_feature_dim());
    for (int f = 0; f < v.frame_count(); ++f) xf.row(f) = frame_features(v, f).transpose();
    standardize_inplace(xf, fmean, fstd);

    Eigen::MatrixXd xt(1, track_feature_dim());
    xt.row(0) = track_features(v).transpose();
    standardize_inplace(xt, tmean, tstd);

    FactorProbs out;
    Eigen::VectorXd* by_head[5] = {&out.motion, &out.shape, &out.intensity,
                                   &out.texture, &out.level};
    for (int h = 0; h < 5; ++h) {
        const auto& spec = kHeads[h];
        const Eigen::MatrixXd& w = clf.params.at(std::string("head.") + spec.name);
        const Eigen::MatrixXd& x = spec.on_track ? xt : xf;
        Eigen::VectorXd mean_probs = Eigen::VectorXd::Zero(spec.classes);
        for (long i = 0; i < x.rows(); ++i)
            mean_probs += softmax_vec((x.row(i) * w).transpose());
        *by_head[h] = mean_probs / static_cast<double>(x.rows());
    }
    return out;
}

double prompt_alignment(const VideoTensor& v, const StructuredPrompt& p,
                        const FactorClassifier& clf) {
    if (clf.params.size() == 0)
        throw PrerequisiteError("prompt_alignment: classifier missing");
    if (clf.min_heldout_accuracy() < 0.95)
        throw PrerequisiteError(
            "prompt_alignment: classifier held-out accuracy below 0.95");
    const FactorProbs probs = classify_factors(v, clf);
    double total = probs.motion[p.motion];
    int count = 1;
    if (p.shape) {
        total += probs.shape[*p.shape];
        ++count;
    }
    if (p.intensity) {
        total += probs.intensity[*p.intensity];
        ++count;
    }
    return total / count;
}

void save_classifier(const std::string& path, const FactorClassifier& clf) {
    nlohmann::json config;
    config["kind"] = "factor-classifier";
    config["meta"] = clf.meta;
    save_checkpoint(path, clf.params, config);
}

FactorClassifier load_classifier(const std::string& path) {
    CheckpointFile f = load_checkpoint(path);
    if (f.config.value("kind", "") != "factor-classifier")
        throw CheckpointError("'" + path + "' is not a factor classifier");
    FactorClassifier clf;
    clf.params = std::move(f.tensors);
    clf.meta = f.config.value("meta", nlohmann::json::object());
    return clf;
}

}  // namespace vmc
