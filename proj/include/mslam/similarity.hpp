#pragma once

#include "mslam/manhattan.hpp"
#include "mslam/pose_graph.hpp"

#include <Eigen/Core>
#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mslam {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Meta-node endpoints (x_start, y_start, x_end, y_end) in scaled units. The
/// label gates comparisons and is not fed to the network.
struct NodeFeature {
    Eigen::Vector4d v = Eigen::Vector4d::Zero();
    TopoLabel label = TopoLabel::Rackspace;
};

inline NodeFeature make_feature(const MetaNode& m, double scale)
{
    NodeFeature f;
    f.v << m.x_start, m.y_start, m.x_end, m.y_end;
    f.v *= scale;
    f.label = m.label;
    return f;
}

/// Same segment traversed the other way round.
inline NodeFeature swap_endpoints(const NodeFeature& f)
{
    NodeFeature g = f;
    g.v << f.v[2], f.v[3], f.v[0], f.v[1];
    return g;
}

/// 0.5·d² for same-instance pairs, 0.5·max(0, margin − d)² otherwise.
inline double contrastive_loss(double d, bool same, double margin)
{
    if (same) return 0.5 * d * d;
    const double h = std::max(0.0, margin - d);
    return 0.5 * h * h;
}

/// Shared-weight embedding network 4 → 64 → 32 → 16, tanh hidden layers and
/// a linear output.
class SiameseModel {
public:
    static constexpr int kIn = 4;
    static constexpr int kH1 = 64;
    static constexpr int kH2 = 32;
    static constexpr int kOut = 16;

    double margin = 1.0;
    double tau_high = 0.5;
    double tau_low = 0.8;
    double feature_scale = 1.0 / 50.0; ///< applied to meters when building features

    Eigen::MatrixXd W1 = Eigen::MatrixXd::Zero(kH1, kIn);
    Eigen::VectorXd b1 = Eigen::VectorXd::Zero(kH1);
    Eigen::MatrixXd W2 = Eigen::MatrixXd::Zero(kH2, kH1);
    Eigen::VectorXd b2 = Eigen::VectorXd::Zero(kH2);
    Eigen::MatrixXd W3 = Eigen::MatrixXd::Zero(kOut, kH2);
    Eigen::VectorXd b3 = Eigen::VectorXd::Zero(kOut);

    /// Glorot-uniform weights, zero biases.
    static SiameseModel initialized(std::uint64_t seed)
    {
        SiameseModel m;
        std::mt19937_64 rng(seed);
        auto fill = [&rng](Eigen::MatrixXd& W) {
            const double lim = std::sqrt(6.0 / static_cast<double>(W.rows() + W.cols()));
            std::uniform_real_distribution<double> u(-lim, lim);
            for (Eigen::Index c = 0; c < W.cols(); ++c) {
                for (Eigen::Index r = 0; r < W.rows(); ++r) W(r, c) = u(rng);
            }
        };
        fill(m.W1);
        fill(m.W2);
        fill(m.W3);
        return m;
    }

    Eigen::VectorXd embed(const Eigen::Vector4d& x) const
    {
        const Eigen::VectorXd h1 = (W1 * x + b1).array().tanh().matrix();
        const Eigen::VectorXd h2 = (W2 * h1 + b2).array().tanh().matrix();
        return W3 * h2 + b3;
    }

    Eigen::VectorXd embed(const NodeFeature& f) const { return embed(f.v); }

    double distance(const NodeFeature& a, const NodeFeature& b) const
    {
        return (embed(a) - embed(b)).norm();
    }

    std::size_t parameter_count() const
    {
        return static_cast<std::size_t>(W1.size() + b1.size() + W2.size() + b2.size() + W3.size() + b3.size());
    }

    std::vector<double> parameters() const
    {
        std::vector<double> p;
        p.reserve(parameter_count());
        for (const auto* m : {&W1, &W2, &W3}) p.insert(p.end(), m->data(), m->data() + m->size());
        for (const auto* v : {&b1, &b2, &b3}) p.insert(p.end(), v->data(), v->data() + v->size());
        return p;
    }

    void set_parameters(const std::vector<double>& p)
    {
        if (p.size() != parameter_count()) throw std::invalid_argument("parameter count mismatch");
        std::size_t k = 0;
        for (auto* m : {&W1, &W2, &W3}) {
            std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(k), m->size(), m->data());
            k += static_cast<std::size_t>(m->size());
        }
        for (auto* v : {&b1, &b2, &b3}) {
            std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(k), v->size(), v->data());
            k += static_cast<std::size_t>(v->size());
        }
    }

    void save(std::ostream& out) const
    {
        out << fmt::format("siamese {} {} {} {}\n", kIn, kH1, kH2, kOut);
        out << fmt::format("margin {} tau_high {} tau_low {} feature_scale {}\n", margin, tau_high,
                           tau_low, feature_scale);
        auto write = [&out](const char* name, const Eigen::MatrixXd& M) {
            out << name << ' ' << M.rows() << ' ' << M.cols() << '\n';
            for (Eigen::Index r = 0; r < M.rows(); ++r) {
                for (Eigen::Index c = 0; c < M.cols(); ++c) out << (c ? " " : "") << fmt::format("{}", M(r, c));
                out << '\n';
            }
        };
        write("W1", W1);
        write("b1", b1);
        write("W2", W2);
        write("b2", b2);
        write("W3", W3);
        write("b3", b3);
    }

    static SiameseModel load(std::istream& in)
    {
        SiameseModel m;
        std::string tag;
        int d0 = 0, d1 = 0, d2 = 0, d3 = 0;
        if (!(in >> tag >> d0 >> d1 >> d2 >> d3) || tag != "siamese" || d0 != kIn || d1 != kH1 ||
            d2 != kH2 || d3 != kOut) {
            throw std::runtime_error("model checkpoint: bad header");
        }
        std::string k1, k2, k3, k4;
        if (!(in >> k1 >> m.margin >> k2 >> m.tau_high >> k3 >> m.tau_low >> k4 >> m.feature_scale)) {
            throw std::runtime_error("model checkpoint: bad hyper-parameter line");
        }
        auto read = [&in](const char* name, Eigen::MatrixXd& M) {
            std::string n;
            Eigen::Index rows = 0, cols = 0;
            if (!(in >> n >> rows >> cols) || n != name || rows != M.rows() || cols != M.cols()) {
                throw std::runtime_error(std::string("model checkpoint: bad block ") + name);
            }
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < cols; ++c) {
                    if (!(in >> M(r, c))) throw std::runtime_error("model checkpoint: truncated");
                }
            }
        };
        auto read_vec = [&read](const char* name, Eigen::VectorXd& v) {
            Eigen::MatrixXd M(v.size(), 1);
            read(name, M);
            v = M.col(0);
        };
        read("W1", m.W1);
        read_vec("b1", m.b1);
        read("W2", m.W2);
        read_vec("b2", m.b2);
        read("W3", m.W3);
        read_vec("b3", m.b3);
        return m;
    }
};

struct TrainingPair {
    NodeFeature a;
    NodeFeature b;
    bool same = false;
    bool reversed = false; ///< b is the endpoint-swapped traversal
};

/// Mean contrastive loss over `pairs` and, when `grad` is non-null, its
/// gradient with respect to SiameseModel::parameters() order.
inline double contrastive_objective(const SiameseModel& m, const std::vector<TrainingPair>& pairs,
                                    std::size_t begin, std::size_t end, const std::vector<std::size_t>& order,
                                    std::vector<double>* grad)
{
    const auto B = static_cast<Eigen::Index>(end - begin);
    if (B <= 0) return 0.0;
    // Both branches go through the network as one 2B-column batch.
    Eigen::MatrixXd X(SiameseModel::kIn, 2 * B);
    for (Eigen::Index i = 0; i < B; ++i) {
        const auto& p = pairs[order[begin + static_cast<std::size_t>(i)]];
        X.col(i) = p.a.v;
        X.col(B + i) = p.b.v;
    }
    const Eigen::MatrixXd H1 = ((m.W1 * X).colwise() + m.b1).array().tanh().matrix();
    const Eigen::MatrixXd H2 = ((m.W2 * H1).colwise() + m.b2).array().tanh().matrix();
    const Eigen::MatrixXd E = (m.W3 * H2).colwise() + m.b3;

    double loss = 0.0;
    Eigen::MatrixXd dE = Eigen::MatrixXd::Zero(SiameseModel::kOut, 2 * B);
    for (Eigen::Index i = 0; i < B; ++i) {
        const auto& p = pairs[order[begin + static_cast<std::size_t>(i)]];
        const Eigen::VectorXd diff = E.col(i) - E.col(B + i);
        const double d = diff.norm();
        loss += contrastive_loss(d, p.same, m.margin);
        Eigen::VectorXd g;
        if (p.same) {
            g = diff;
        } else if (d < m.margin && d > 1e-12) {
            g = -(m.margin - d) / d * diff;
        } else {
            continue;
        }
        dE.col(i) = g;
        dE.col(B + i) = -g;
    }
    const double inv = 1.0 / static_cast<double>(B);
    loss *= inv;
    if (grad == nullptr) return loss;

    dE *= inv;
    const Eigen::MatrixXd gW3 = dE * H2.transpose();
    const Eigen::VectorXd gb3 = dE.rowwise().sum();
    const Eigen::MatrixXd dZ2 = ((m.W3.transpose() * dE).array() * (1.0 - H2.array().square())).matrix();
    const Eigen::MatrixXd gW2 = dZ2 * H1.transpose();
    const Eigen::VectorXd gb2 = dZ2.rowwise().sum();
    const Eigen::MatrixXd dZ1 = ((m.W2.transpose() * dZ2).array() * (1.0 - H1.array().square())).matrix();
    const Eigen::MatrixXd gW1 = dZ1 * X.transpose();
    const Eigen::VectorXd gb1 = dZ1.rowwise().sum();

    grad->clear();
    grad->reserve(m.parameter_count());
    for (const Eigen::MatrixXd* g : {&gW1, &gW2, &gW3}) grad->insert(grad->end(), g->data(), g->data() + g->size());
    for (const Eigen::VectorXd* g : {&gb1, &gb2, &gb3}) grad->insert(grad->end(), g->data(), g->data() + g->size());
    return loss;
}

inline double contrastive_objective(const SiameseModel& m, const std::vector<TrainingPair>& pairs,
                                    std::vector<double>* grad = nullptr)
{
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    return contrastive_objective(m, pairs, 0, pairs.size(), order, grad);
}

struct TrainConfig {
    int epochs = 200;
    double learning_rate = 3e-3;
    int batch_size = 32;
    std::uint64_t seed = 1;
};

struct TrainResult {
    SiameseModel model;
    std::vector<double> loss_curve; ///< full-set loss before training, then after each epoch
};

/// Minibatch gradient descent with Adam moment estimates on the mean
/// contrastive loss.
inline TrainResult train(const SiameseModel& init, const std::vector<TrainingPair>& pairs,
                         const TrainConfig& cfg)
{
    if (pairs.empty()) throw TrainingError("no training pairs");
    TrainResult res{init, {}};
    SiameseModel& m = res.model;
    std::vector<double> theta = m.parameters();
    std::vector<double> mom(theta.size(), 0.0), vel(theta.size(), 0.0), grad;
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    res.loss_curve.push_back(contrastive_objective(m, pairs));
    long step = 0;
    const auto bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t b = 0; b < pairs.size(); b += bs) {
            const double loss = contrastive_objective(m, pairs, b, std::min(pairs.size(), b + bs), order, &grad);
            if (!std::isfinite(loss)) {
                throw TrainingError("training diverged (non-finite loss); try a smaller learning rate");
            }
            ++step;
            const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
            for (std::size_t i = 0; i < theta.size(); ++i) {
                mom[i] = kBeta1 * mom[i] + (1.0 - kBeta1) * grad[i];
                vel[i] = kBeta2 * vel[i] + (1.0 - kBeta2) * grad[i] * grad[i];
                theta[i] -= cfg.learning_rate * (mom[i] / c1) / (std::sqrt(vel[i] / c2) + kEps);
            }
            m.set_parameters(theta);
        }
        const double epoch_loss = contrastive_objective(m, pairs);
        if (!std::isfinite(epoch_loss)) {
            throw TrainingError("training diverged (non-finite loss); try a smaller learning rate");
        }
        res.loss_curve.push_back(epoch_loss);
    }
    return res;
}

/// Describes the kind of warehouse the synthetic meta-nodes imitate.
struct SynthesisSpec {
    double extent = 50.0;         ///< meters; also the feature normaliser
    double length_min = 2.0;
    double length_max = 14.0;
    double spacing_min = 3.0;     ///< center distance between neighbouring aisles
    double spacing_max = 4.5;
    double noise_fraction = 0.02; ///< positive-pair coordinate noise, fraction of length
    double swap_probability = 0.5;
    double hard_negative_fraction = 0.5;
};

namespace detail {

struct SyntheticSegment {
    double x0, y0, x1, y1;
};

template <class Rng>
SyntheticSegment random_segment(const SynthesisSpec& s, Rng& rng)
{
    std::uniform_real_distribution<double> pos(-s.extent, s.extent);
    std::uniform_real_distribution<double> len(s.length_min, s.length_max);
    std::uniform_int_distribution<int> dir(0, 3);
    const double x0 = pos(rng), y0 = pos(rng), l = len(rng);
    const Point2 d = axis_direction(dir(rng) * kHalfPi - std::numbers::pi / 2.0);
    return {x0, y0, x0 + l * d.x, y0 + l * d.y};
}

inline NodeFeature to_feature(const SyntheticSegment& g, double scale)
{
    NodeFeature f;
    f.v << g.x0, g.y0, g.x1, g.y1;
    f.v *= scale;
    return f;
}

} // namespace detail

/// Balanced same/different pairs (even indices positive). Positives perturb
/// every coordinate with Gaussian noise and swap endpoints with
/// `swap_probability`; negatives are either a neighbouring aisle-like
/// segment (parallel or collinear shift) or an unrelated random segment.
inline std::vector<TrainingPair> synthesize_training_pairs(const SynthesisSpec& spec, int n_pairs,
                                                           std::uint64_t seed)
{
    if (n_pairs < 1) throw std::invalid_argument("n_pairs must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> spacing(spec.spacing_min, spec.spacing_max);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double scale = 1.0 / spec.extent;

    std::vector<TrainingPair> out;
    out.reserve(static_cast<std::size_t>(n_pairs));
    for (int i = 0; i < n_pairs; ++i) {
        const auto base = detail::random_segment(spec, rng);
        const double len = std::hypot(base.x1 - base.x0, base.y1 - base.y0);
        const double sigma = spec.noise_fraction * len;
        detail::SyntheticSegment other = base;
        const bool same = i % 2 == 0;
        if (!same) {
            if (unit(rng) < spec.hard_negative_fraction) {
                const double ux = (base.x1 - base.x0) / len, uy = (base.y1 - base.y0) / len;
                const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
                double sx, sy;
                if (unit(rng) < 2.0 / 3.0) {
                    const double off = sign * spacing(rng);
                    sx = -uy * off;
                    sy = ux * off;
                } else {
                    const double off = sign * (len + spacing(rng));
                    sx = ux * off;
                    sy = uy * off;
                }
                other = {base.x0 + sx, base.y0 + sy, base.x1 + sx, base.y1 + sy};
            } else {
                other = detail::random_segment(spec, rng);
            }
        }
        other.x0 += sigma * gauss(rng);
        other.y0 += sigma * gauss(rng);
        other.x1 += sigma * gauss(rng);
        other.y1 += sigma * gauss(rng);
        TrainingPair p;
        p.a = detail::to_feature(base, scale);
        p.b = detail::to_feature(other, scale);
        p.same = same;
        if (unit(rng) < spec.swap_probability) {
            p.b = swap_endpoints(p.b);
            p.reversed = true;
        }
        out.push_back(p);
    }
    return out;
}

/// Fraction of pairs whose (single-orientation) embedding distance falls on
/// the right side of `threshold`.
inline double pair_accuracy(const SiameseModel& m, const std::vector<TrainingPair>& pairs, double threshold)
{
    if (pairs.empty()) return 0.0;
    int ok = 0;
    for (const auto& p : pairs) {
        const bool predicted = m.distance(p.a, p.b) <= threshold;
        ok += predicted == p.same ? 1 : 0;
    }
    return static_cast<double>(ok) / static_cast<double>(pairs.size());
}

enum class ConfidenceBand { High, Low };

inline std::string_view to_string(ConfidenceBand b) { return b == ConfidenceBand::High ? "HIGH" : "LOW"; }

struct ProposalPair {
    int id = 0;
    int meta_i = 0;
    int meta_j = 0;
    double distance = 0.0;
    ConfidenceBand band = ConfidenceBand::High;
    bool reversed = false;

    friend bool operator==(const ProposalPair&, const ProposalPair&) = default;
};

/// Scores pairs with the Siamese embedding distance.
struct SiameseScorer {
    const SiameseModel& model;

    double scale() const { return model.feature_scale; }
    double tau_high() const { return model.tau_high; }
    double tau_low() const { return model.tau_low; }
    double score(const NodeFeature& a, const NodeFeature& b) const { return model.distance(a, b); }
};

/// Nearest-neighbour baseline: worst endpoint distance in meters.
struct EndpointScorer {
    double tau_high_m = 1.0;
    double tau_low_m = 2.0;

    double scale() const { return 1.0; }
    double tau_high() const { return tau_high_m; }
    double tau_low() const { return tau_low_m; }
    double score(const NodeFeature& a, const NodeFeature& b) const
    {
        return std::max(std::hypot(a.v[0] - b.v[0], a.v[1] - b.v[1]),
                        std::hypot(a.v[2] - b.v[2], a.v[3] - b.v[3]));
    }
};

template <class S>
concept PairScorer = requires(const S& s, const NodeFeature& f) {
    { s.scale() } -> std::convertible_to<double>;
    { s.tau_high() } -> std::convertible_to<double>;
    { s.tau_low() } -> std::convertible_to<double>;
    { s.score(f, f) } -> std::convertible_to<double>;
};

/// Compares every same-label meta-node pair in both traversal orientations and
/// keeps those whose smaller score is within tau_low.
template <PairScorer S>
std::vector<ProposalPair> propose(const S& scorer, const ManhattanGraph& mg)
{
    std::vector<NodeFeature> feats;
    feats.reserve(mg.meta_nodes.size());
    for (const auto& m : mg.meta_nodes) feats.push_back(make_feature(m, scorer.scale()));

    std::vector<ProposalPair> out;
    for (int i = 0; i < mg.size(); ++i) {
        for (int j = i + 1; j < mg.size(); ++j) {
            const auto& fi = feats[static_cast<std::size_t>(i)];
            const auto& fj = feats[static_cast<std::size_t>(j)];
            if (fi.label != fj.label) continue;
            const double d_fwd = scorer.score(fi, fj);
            const double d_rev = scorer.score(fi, swap_endpoints(fj));
            const double d = std::min(d_fwd, d_rev);
            // The embedding is trained to match reversed traversals, so the two
            // distances are close by design; the direction is read off the
            // endpoints themselves.
            const bool reversed = (fi.v - swap_endpoints(fj).v).squaredNorm() < (fi.v - fj.v).squaredNorm();
            if (d > scorer.tau_low()) continue;
            ProposalPair p;
            p.id = static_cast<int>(out.size());
            p.meta_i = i;
            p.meta_j = j;
            p.distance = d;
            p.band = d <= scorer.tau_high() ? ConfidenceBand::High : ConfidenceBand::Low;
            p.reversed = reversed;
            out.push_back(p);
        }
    }
    return out;
}

inline std::vector<ProposalPair> propose(const SiameseModel& model, const ManhattanGraph& mg)
{
    return propose(SiameseScorer{model}, mg);
}

} // namespace mslam
