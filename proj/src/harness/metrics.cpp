#include "oneranker/harness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace oneranker::harness {

std::vector<std::size_t> rank_order(std::span<const double> scores, std::span<const std::uint32_t> ids) {
    if (scores.size() != ids.size()) throw std::invalid_argument("rank_order: score and id counts differ");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids[a] < ids[b];
    });
    return order;
}

double hr_at_k(std::span<const std::size_t> ranking, std::size_t positive, std::size_t k) {
    if (k == 0 || k > ranking.size()) {
        throw std::invalid_argument("hr_at_k: K=" + std::to_string(k) + " outside [1, " + std::to_string(ranking.size()) + "]");
    }
    const auto it = std::find(ranking.begin(), ranking.end(), positive);
    if (it == ranking.end()) throw std::invalid_argument("hr_at_k: positive not in ranking");
    return static_cast<std::size_t>(it - ranking.begin()) < k ? 1.0 : 0.0;
}

double ndcg_at_k(std::span<const std::size_t> ranking, std::span<const double> gains, std::size_t k) {
    if (k == 0 || k > ranking.size()) {
        throw std::invalid_argument("ndcg_at_k: K=" + std::to_string(k) + " outside [1, " + std::to_string(ranking.size()) + "]");
    }
    if (gains.size() != ranking.size()) throw std::invalid_argument("ndcg_at_k: gain and ranking sizes differ");
    double total = 0.0;
    for (double g : gains) {
        if (!(g >= 0.0)) throw std::invalid_argument("ndcg_at_k: gains must be >= 0");
        total += g;
    }
    if (total <= 0.0) throw std::invalid_argument("ndcg_at_k: all gains are zero");
    std::vector<double> ideal(gains.begin(), gains.end());
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double dcg = 0.0, idcg = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
        const double discount = std::log2(static_cast<double>(r) + 2.0);
        dcg += gains[ranking[r]] / discount;
        idcg += ideal[r] / discount;
    }
    return dcg / idcg;
}

BoxStats box_stats(std::vector<double> x) {
    if (x.empty()) throw std::invalid_argument("box_stats: empty sample");
    std::sort(x.begin(), x.end());
    auto q = [&](double p) {
        const double pos = p * static_cast<double>(x.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, x.size() - 1);
        return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
    };
    return {x.front(), q(0.25), q(0.5), q(0.75), x.back()};
}

ConsistencyReport consistency_report(const std::vector<std::vector<double>>& step2,
                                     const std::vector<std::vector<double>>& step3,
                                     const std::vector<std::vector<std::uint32_t>>& ids) {
    if (step2.size() != step3.size() || step2.size() != ids.size()) {
        throw std::invalid_argument("consistency_report: instance counts differ");
    }
    if (step2.empty()) throw std::invalid_argument("consistency_report: no instances");
    const std::size_t n = step2[0].size();
    ConsistencyReport rep;
    rep.n = n;
    rep.instances = step2.size();
    std::vector<std::vector<double>> per_rank(n);
    std::vector<double> overlap(n, 0.0);
    for (std::size_t i = 0; i < step2.size(); ++i) {
        if (step2[i].size() != n || step3[i].size() != n || ids[i].size() != n) {
            throw std::invalid_argument("consistency_report: length mismatch at instance " + std::to_string(i));
        }
        const auto o2 = rank_order(step2[i], ids[i]);
        const auto o3 = rank_order(step3[i], ids[i]);
        std::vector<std::size_t> rank2(n);
        for (std::size_t r = 0; r < n; ++r) rank2[o2[r]] = r;
        for (std::size_t r = 0; r < n; ++r) {
            const double dev = std::abs(static_cast<double>(rank2[o3[r]]) - static_cast<double>(r));
            per_rank[r].push_back(dev);
            rep.all_deviations.push_back(dev);
        }
        std::vector<bool> in2(n, false), in3(n, false);
        std::size_t common = 0;
        for (std::size_t k = 0; k < n; ++k) {
            // Extending both prefixes by one can add 0, 1 or 2 shared items.
            in2[o2[k]] = true;
            in3[o3[k]] = true;
            if (o2[k] == o3[k]) {
                ++common;
            } else {
                common += in3[o2[k]] ? 1 : 0;
                common += in2[o3[k]] ? 1 : 0;
            }
            overlap[k] += static_cast<double>(common) / static_cast<double>(k + 1);
        }
    }
    for (std::size_t r = 0; r < n; ++r) rep.deviation.push_back(box_stats(per_rank[r]));
    for (auto& o : overlap) o /= static_cast<double>(step2.size());
    rep.overlap = std::move(overlap);
    return rep;
}

std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.8f", v);
    return buf;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out = "epoch,split,metric,k,value\n";
    for (const auto& r : rows) {
        out += std::to_string(r.epoch) + "," + r.split + "," + r.metric + "," + std::to_string(r.k) + "," +
               format_value(r.value) + "\n";
    }
    return out;
}

std::string consistency_csv(const ConsistencyReport& rep) {
    std::string out = "rank,min,q1,median,q3,max\n";
    for (std::size_t r = 0; r < rep.deviation.size(); ++r) {
        const auto& b = rep.deviation[r];
        out += std::to_string(r + 1) + "," + format_value(b.min) + "," + format_value(b.q1) + "," +
               format_value(b.median) + "," + format_value(b.q3) + "," + format_value(b.max) + "\n";
    }
    out += "\nk,overlap\n";
    for (std::size_t k = 0; k < rep.overlap.size(); ++k) {
        out += std::to_string(k + 1) + "," + format_value(rep.overlap[k]) + "\n";
    }
    return out;
}

namespace {

struct Canvas {
    double width = 720, height = 360, left = 56, right = 16, top = 36, bottom = 44;
    double x0() const { return left; }
    double x1() const { return width - right; }
    double y0() const { return height - bottom; }
    double y1() const { return top; }
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

void frame(std::ostringstream& s, const Canvas& c, const std::string& title, const std::string& xlabel,
           const std::string& ylabel, double ymax, std::size_t yticks) {
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << c.width << "\" height=\"" << c.height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << num(c.width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    s << "<line x1=\"" << num(c.x0()) << "\" y1=\"" << num(c.y0()) << "\" x2=\"" << num(c.x1()) << "\" y2=\""
      << num(c.y0()) << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << num(c.x0()) << "\" y1=\"" << num(c.y0()) << "\" x2=\"" << num(c.x0()) << "\" y2=\""
      << num(c.y1()) << "\" stroke=\"black\"/>\n";
    for (std::size_t t = 0; t <= yticks; ++t) {
        const double v = ymax * static_cast<double>(t) / static_cast<double>(yticks);
        const double y = c.y0() - (c.y0() - c.y1()) * v / ymax;
        s << "<line x1=\"" << num(c.x0() - 4) << "\" y1=\"" << num(y) << "\" x2=\"" << num(c.x1()) << "\" y2=\""
          << num(y) << "\" stroke=\"#ddd\"/>\n";
        s << "<text x=\"" << num(c.x0() - 6) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << num(v)
          << "</text>\n";
    }
    s << "<text x=\"" << num((c.x0() + c.x1()) / 2) << "\" y=\"" << num(c.height - 8)
      << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
    s << "<text transform=\"translate(14," << num((c.y0() + c.y1()) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << ylabel << "</text>\n";
}

}  // namespace

std::string boxplot_svg(const ConsistencyReport& rep, const std::string& title) {
    Canvas c;
    const double ymax = std::max(1.0, static_cast<double>(rep.n > 0 ? rep.n - 1 : 1));
    std::ostringstream s;
    frame(s, c, title, "Step-3 rank", "|rank(Step 2) - rank(Step 3)|", ymax, 5);
    const double slot = (c.x1() - c.x0()) / static_cast<double>(std::max<std::size_t>(rep.n, 1));
    auto y = [&](double v) { return c.y0() - (c.y0() - c.y1()) * v / ymax; };
    for (std::size_t r = 0; r < rep.deviation.size(); ++r) {
        const auto& b = rep.deviation[r];
        const double cx = c.x0() + slot * (static_cast<double>(r) + 0.5);
        const double w = slot * 0.6;
        s << "<line x1=\"" << num(cx) << "\" y1=\"" << num(y(b.min)) << "\" x2=\"" << num(cx) << "\" y2=\""
          << num(y(b.max)) << "\" stroke=\"#555\"/>\n";
        s << "<rect x=\"" << num(cx - w / 2) << "\" y=\"" << num(y(b.q3)) << "\" width=\"" << num(w)
          << "\" height=\"" << num(std::max(0.5, y(b.q1) - y(b.q3))) << "\" fill=\"#8ab4f8\" stroke=\"#1a4d99\"/>\n";
        s << "<line x1=\"" << num(cx - w / 2) << "\" y1=\"" << num(y(b.median)) << "\" x2=\"" << num(cx + w / 2)
          << "\" y2=\"" << num(y(b.median)) << "\" stroke=\"#c0392b\" stroke-width=\"2\"/>\n";
        if ((r + 1) % 5 == 0 || r == 0) {
            s << "<text x=\"" << num(cx) << "\" y=\"" << num(c.y0() + 14) << "\" text-anchor=\"middle\">" << r + 1
              << "</text>\n";
        }
    }
    s << "</svg>\n";
    return s.str();
}

std::string overlap_svg(const std::vector<std::pair<std::string, const ConsistencyReport*>>& series,
                        const std::string& title) {
    static const char* colors[] = {"#1a4d99", "#c0392b", "#27ae60", "#8e44ad", "#d35400"};
    Canvas c;
    std::ostringstream s;
    frame(s, c, title, "K", "Top-K overlap", 1.0, 5);
    std::size_t n = 1;
    for (const auto& [_, rep] : series) n = std::max(n, rep->n);
    auto x = [&](std::size_t k) {
        return c.x0() + (c.x1() - c.x0()) * (n > 1 ? static_cast<double>(k - 1) / static_cast<double>(n - 1) : 0.5);
    };
    auto y = [&](double v) { return c.y0() - (c.y0() - c.y1()) * v; };
    for (std::size_t k = 1; k <= n; ++k) {
        if (k == 1 || k % 5 == 0) {
            s << "<text x=\"" << num(x(k)) << "\" y=\"" << num(c.y0() + 14) << "\" text-anchor=\"middle\">" << k
              << "</text>\n";
        }
    }
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& [name, rep] = series[i];
        const char* color = colors[i % 5];
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t k = 1; k <= rep->overlap.size(); ++k) s << num(x(k)) << "," << num(y(rep->overlap[k - 1])) << " ";
        s << "\"/>\n";
        s << "<text x=\"" << num(c.x1() - 150) << "\" y=\"" << num(c.y0() - 14 - 14 * static_cast<double>(i))
          << "\" fill=\"" << color << "\">" << name << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace oneranker::harness
