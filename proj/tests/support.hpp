#pragma once

// Independent reference implementations and fixtures shared by the unit and acceptance tests.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "roadrl/geometry.hpp"
#include "roadrl/layers.hpp"
#include "roadrl/qnetwork.hpp"
#include "roadrl/road_map.hpp"
#include "roadrl/tensor.hpp"

namespace roadrl::testing {

inline std::filesystem::path source_dir() { return ROADRL_SOURCE_DIR; }
inline std::filesystem::path small_map_path() { return source_dir() / "maps" / "small.map"; }

/// Unique scratch directory, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                ("roadrl_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ------------------------------------------------------------------ graphs

/// Random connected graph: a bidirectional spanning tree plus extra one-way and two-way
/// edges, some bent through an interior point so costs exceed the straight-line distance.
inline RoadGraph random_connected_graph(std::mt19937_64& rng, std::size_t max_nodes = 50) {
    std::uniform_int_distribution<std::size_t> count(2, max_nodes);
    std::uniform_real_distribution<double> coord(0.0, 200.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t n = count(rng);
    RoadGraph g;
    for (std::size_t i = 0; i < n; ++i) {
        g.add_node("n" + std::to_string(i), {coord(rng), coord(rng)});
    }
    auto add = [&](std::size_t a, std::size_t b, bool both) {
        const Vec2 pa = g.nodes()[a].position;
        const Vec2 pb = g.nodes()[b].position;
        std::vector<Vec2> via;
        if (unit(rng) < 0.3) {
            const Vec2 mid = (pa + pb) * 0.5;
            via.push_back(mid + Vec2{coord(rng) - 100.0, coord(rng) - 100.0} * 0.2);
        }
        g.add_edge(a, b, 6.0, via);
        if (both) {
            std::vector<Vec2> back(via.rbegin(), via.rend());
            g.add_edge(b, a, 6.0, back);
        }
    };
    for (std::size_t i = 1; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> parent(0, i - 1);
        add(parent(rng), i, true);
    }
    std::uniform_int_distribution<std::size_t> any(0, n - 1);
    const std::size_t extra = n * 2;
    for (std::size_t k = 0; k < extra; ++k) {
        const std::size_t a = any(rng);
        const std::size_t b = any(rng);
        if (a != b) {
            add(a, b, unit(rng) < 0.5);
        }
    }
    return g;
}

/// Plain Dijkstra over edge costs; infinity when unreachable.
inline double dijkstra_cost(const RoadGraph& g, std::size_t origin, std::size_t destination) {
    const std::size_t n = g.nodes().size();
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::vector<bool> done(n, false);
    dist[origin] = 0.0;
    for (std::size_t iter = 0; iter < n; ++iter) {
        std::size_t u = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (!done[i] && (u == n || dist[i] < dist[u])) {
                u = i;
            }
        }
        if (u == n || std::isinf(dist[u])) {
            break;
        }
        done[u] = true;
        for (const RoadEdge& e : g.edges()) {
            if (e.from == u && dist[u] + e.cost < dist[e.to]) {
                dist[e.to] = dist[u] + e.cost;
            }
        }
    }
    return dist[destination];
}

// ------------------------------------------------------------------ geometry

inline bool segments_cross(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
    auto orient = [](Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); };
    auto on_segment = [](Vec2 a, Vec2 b, Vec2 p) {
        return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
               p.y <= std::max(a.y, b.y);
    };
    const double d1 = orient(q1, q2, p1);
    const double d2 = orient(q1, q2, p2);
    const double d3 = orient(p1, p2, q1);
    const double d4 = orient(p1, p2, q2);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
        return true;
    }
    return (d1 == 0 && on_segment(q1, q2, p1)) || (d2 == 0 && on_segment(q1, q2, p2)) ||
           (d3 == 0 && on_segment(p1, p2, q1)) || (d4 == 0 && on_segment(p1, p2, q2));
}

/// Convex polygon point test by edge orientation.
inline bool polygon_contains(const std::array<Vec2, 4>& poly, Vec2 p) {
    bool pos = false;
    bool neg = false;
    for (std::size_t i = 0; i < 4; ++i) {
        const double c = cross(poly[(i + 1) % 4] - poly[i], p - poly[i]);
        pos = pos || c > 0;
        neg = neg || c < 0;
    }
    return !(pos && neg);
}

/// Brute-force rectangle overlap: any edge pair crosses or one rectangle contains the other.
inline bool rects_overlap_bruteforce(const OrientedRect& a, const OrientedRect& b) {
    const auto ca = a.corners();
    const auto cb = b.corners();
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            if (segments_cross(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4])) {
                return true;
            }
        }
    }
    return polygon_contains(ca, cb[0]) || polygon_contains(cb, ca[0]);
}

// ------------------------------------------------------------------ neural

inline Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : t.values()) {
        v = u(rng);
    }
    return t;
}

inline Tensor naive_conv2d(const Tensor& in, const Tensor& w, const Tensor& b, std::size_t stride) {
    const std::size_t C = in.dim(0), H = in.dim(1), W = in.dim(2);
    const std::size_t F = w.dim(0), K = w.dim(2);
    const std::size_t OH = (H - K) / stride + 1, OW = (W - K) / stride + 1;
    Tensor out({F, OH, OW});
    for (std::size_t f = 0; f < F; ++f) {
        for (std::size_t oy = 0; oy < OH; ++oy) {
            for (std::size_t ox = 0; ox < OW; ++ox) {
                double acc = b[f];
                for (std::size_t c = 0; c < C; ++c) {
                    for (std::size_t ky = 0; ky < K; ++ky) {
                        for (std::size_t kx = 0; kx < K; ++kx) {
                            acc += w[((f * C + c) * K + ky) * K + kx] *
                                   in[(c * H + oy * stride + ky) * W + ox * stride + kx];
                        }
                    }
                }
                out[(f * OH + oy) * OW + ox] = acc;
            }
        }
    }
    return out;
}

inline Tensor naive_avgpool(const Tensor& in, std::size_t k) {
    const std::size_t C = in.dim(0), H = in.dim(1), W = in.dim(2);
    const std::size_t OH = H / k, OW = W / k;
    Tensor out({C, OH, OW});
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 0; y < OH; ++y) {
            for (std::size_t x = 0; x < OW; ++x) {
                double s = 0.0;
                for (std::size_t dy = 0; dy < k; ++dy) {
                    for (std::size_t dx = 0; dx < k; ++dx) {
                        s += in[(c * H + y * k + dy) * W + x * k + dx];
                    }
                }
                out[(c * OH + y) * OW + x] = s / static_cast<double>(k * k);
            }
        }
    }
    return out;
}

/// Three conv(3x3)+pool stages and two dense layers, with narrow widths so that finite
/// differences over every parameter stay cheap.
inline NetworkSpec tiny_full_spec() {
    NetworkSpec s;
    s.in_channels = 2;
    s.in_height = 22;
    s.in_width = 22;
    s.conv = {{3, 3, 1, 2}, {3, 3, 1, 2}, {3, 3, 1, 2}};
    s.scalar_inputs = 2;
    s.hidden = {5, 4};
    s.outputs = 9;
    return s;
}

struct GradCheckResult {
    std::size_t parameters{0};
    double max_relative_error{0.0};
    std::size_t worst_tensor{0};
    std::size_t worst_index{0};
};

/// Compares backward() against central differences of L = sum_k c_k Q_k for every
/// parameter. Relative error is |a - n| / max(|a|, |n|), taken as 0 when both are below 1e-10.
inline GradCheckResult gradient_check(QNetworkParams params, const Tensor& image, const std::vector<double>& scalars,
                                      const std::vector<double>& coeffs, double h = 1e-4) {
    auto loss = [&](const QNetworkParams& p) {
        const std::vector<double> q = forward(p, image, scalars);
        double l = 0.0;
        for (std::size_t k = 0; k < q.size(); ++k) {
            l += coeffs[k] * q[k];
        }
        return l;
    };
    ForwardTrace trace;
    forward(params, image, scalars, &trace);
    Gradients grads = zero_gradients(params);
    backward(params, trace, coeffs, grads);

    GradCheckResult r;
    for (std::size_t t = 0; t < params.tensors().size(); ++t) {
        for (std::size_t i = 0; i < params.tensors()[t].size(); ++i) {
            double& w = params.tensors()[t][i];
            const double saved = w;
            w = saved + h;
            const double up = loss(params);
            w = saved - h;
            const double down = loss(params);
            w = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = grads[t][i];
            const double scale = std::max(std::abs(analytic), std::abs(numeric));
            const double rel = scale < 1e-10 ? 0.0 : std::abs(analytic - numeric) / scale;
            ++r.parameters;
            if (rel > r.max_relative_error) {
                r.max_relative_error = rel;
                r.worst_tensor = t;
                r.worst_index = i;
            }
        }
    }
    return r;
}

// ------------------------------------------------------------------ statistics

/// Upper-tail probability of the chi-square distribution, via the regularized upper
/// incomplete gamma function (series / continued fraction).
inline double chi_square_survival(double x, double dof) {
    const double a = 0.5 * dof;
    const double z = 0.5 * x;
    if (z <= 0.0) {
        return 1.0;
    }
    const double log_prefix = a * std::log(z) - z - std::lgamma(a);
    if (z < a + 1.0) {
        double sum = 1.0 / a;
        double term = sum;
        for (int n = 1; n < 1000; ++n) {
            term *= z / (a + n);
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-15) {
                break;
            }
        }
        return 1.0 - std::exp(log_prefix) * sum;
    }
    // Lentz continued fraction for Q(a, z).
    const double tiny = 1e-300;
    double b = z + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double f = d;
    for (int i = 1; i < 1000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        d = std::abs(d) < tiny ? tiny : d;
        c = b + an / c;
        c = std::abs(c) < tiny ? tiny : c;
        d = 1.0 / d;
        const double delta = d * c;
        f *= delta;
        if (std::abs(delta - 1.0) < 1e-15) {
            break;
        }
    }
    return std::exp(log_prefix) * f;
}

/// Pearson statistic of observed counts against a uniform expectation.
inline double chi_square_uniform(const std::vector<std::size_t>& counts) {
    std::size_t total = 0;
    for (std::size_t c : counts) {
        total += c;
    }
    const double expected = static_cast<double>(total) / static_cast<double>(counts.size());
    double stat = 0.0;
    for (std::size_t c : counts) {
        const double diff = static_cast<double>(c) - expected;
        stat += diff * diff / expected;
    }
    return stat;
}

}  // namespace roadrl::testing
