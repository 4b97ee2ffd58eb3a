#include "combo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace combo {

std::vector<ConfusionCounts> confusion(const OneHotMask& pred, const OneHotMask& gt) {
    if (pred.dims() != gt.dims() || pred.channels() != gt.channels())
        throw std::invalid_argument("confusion: shape mismatch");
    const auto n = pred.dims().count();
    std::vector<ConfusionCounts> out(pred.channels());
    for (int c = 0; c < pred.channels(); ++c) {
        ConfusionCounts& cc = out[c];
        const auto* p = pred.bits().data() + std::int64_t(c) * n;
        const auto* g = gt.bits().data() + std::int64_t(c) * n;
        for (std::int64_t i = 0; i < n; ++i) {
            if (p[i] && g[i]) ++cc.tp;
            else if (p[i] && !g[i]) ++cc.fp;
            else if (!p[i] && g[i]) ++cc.fn;
            else ++cc.tn;
        }
    }
    return out;
}

double dice_score(const ConfusionCounts& cc) {
    if (cc.tp + cc.fp + cc.fn == 0) return 1.0;
    return 2.0 * double(cc.tp) / double(2 * cc.tp + cc.fp + cc.fn);
}

double jaccard(const ConfusionCounts& cc) {
    if (cc.tp + cc.fp + cc.fn == 0) return 1.0;
    return double(cc.tp) / double(cc.tp + cc.fp + cc.fn);
}

double fnr(const ConfusionCounts& cc) {
    if (cc.fn + cc.tp == 0) return 0.0;
    return double(cc.fn) / double(cc.fn + cc.tp);
}

double fpr_pos(const ConfusionCounts& cc) {
    if (cc.fn + cc.tp == 0)
        return cc.fp == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    return double(cc.fp) / double(cc.fn + cc.tp);
}

double fpr_tn(const ConfusionCounts& cc) {
    if (cc.fp + cc.tn == 0) return 0.0;
    return double(cc.fp) / double(cc.fp + cc.tn);
}

namespace {

struct Point3 {
    double x, y, z;
};

// Foreground voxels with at least one face-adjacent background neighbor;
// voxels on the volume border count as boundary.
std::vector<Point3> boundary_points(const OneHotMask& m, int channel, const Spacing3& sp) {
    std::vector<Point3> pts;
    const Dims3 d = m.dims();
    for (int z = 0; z < d.d; ++z)
        for (int y = 0; y < d.h; ++y)
            for (int x = 0; x < d.w; ++x) {
                if (!m.at(x, y, z, channel)) continue;
                bool boundary = x == 0 || x == d.w - 1 || y == 0 || y == d.h - 1 || z == 0 ||
                                z == d.d - 1;
                if (!boundary)
                    boundary = !m.at(x - 1, y, z, channel) || !m.at(x + 1, y, z, channel) ||
                               !m.at(x, y - 1, z, channel) || !m.at(x, y + 1, z, channel) ||
                               !m.at(x, y, z - 1, channel) || !m.at(x, y, z + 1, channel);
                if (boundary) pts.push_back({x * sp.x, y * sp.y, z * sp.z});
            }
    return pts;
}

double directed_hausdorff(const std::vector<Point3>& a, const std::vector<Point3>& b) {
    double worst = 0.0;
    for (const auto& p : a) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : b) {
            const double dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
            const double d2 = dx * dx + dy * dy + dz * dz;
            if (d2 < best) best = d2;
            if (best == 0.0) break;
        }
        worst = std::max(worst, best);
    }
    return std::sqrt(worst);
}

OrganStats fold_stats(const std::vector<double>& xs) {
    OrganStats s;
    s.count = int(xs.size());
    if (xs.empty()) return s;
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / double(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(var / double(xs.size()));
    return s;
}

}  // namespace

std::optional<double> hausdorff(const OneHotMask& pred, const OneHotMask& gt, int channel,
                                const Spacing3& spacing) {
    if (pred.dims() != gt.dims())
        throw std::invalid_argument("hausdorff: shape mismatch");
    const auto a = boundary_points(pred, channel, spacing);
    const auto b = boundary_points(gt, channel, spacing);
    if (a.empty() || b.empty()) return std::nullopt;
    return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

OrganReport organ_report(const std::vector<EvalCase>& cases) {
    if (cases.empty()) throw std::invalid_argument("organ_report: need at least one case");
    const int channels = cases.front().gt->channels();
    OrganReport rep;
    for (const auto& c : cases) {
        const auto ccs = confusion(*c.pred, *c.gt);
        for (int organ = 0; organ < channels; ++organ) {
            CaseMetrics m;
            m.case_id = c.case_id;
            m.organ = organ;
            m.dice = dice_score(ccs[organ]);
            m.jaccard = jaccard(ccs[organ]);
            m.fpr_pos = fpr_pos(ccs[organ]);
            m.fpr_tn = fpr_tn(ccs[organ]);
            m.fnr = fnr(ccs[organ]);
            m.hd_mm = hausdorff(*c.pred, *c.gt, organ, c.spacing);
            m.fg_fraction_pct =
                100.0 * double(ccs[organ].tp + ccs[organ].fn) / double(ccs[organ].total());
            rep.rows.push_back(std::move(m));
        }
    }
    for (int organ = 0; organ < channels; ++organ) {
        std::vector<double> dice, jac, fp_pos, fp_tn, fn_rate, hd, fg;
        for (const auto& r : rep.rows) {
            if (r.organ != organ) continue;
            dice.push_back(r.dice);
            jac.push_back(r.jaccard);
            fp_pos.push_back(r.fpr_pos);
            fp_tn.push_back(r.fpr_tn);
            fn_rate.push_back(r.fnr);
            if (r.hd_mm) hd.push_back(*r.hd_mm);
            fg.push_back(r.fg_fraction_pct);
        }
        OrganRow row;
        row.organ = organ;
        row.dice = fold_stats(dice);
        row.jaccard = fold_stats(jac);
        row.fpr_pos = fold_stats(fp_pos);
        row.fpr_tn = fold_stats(fp_tn);
        row.fnr = fold_stats(fn_rate);
        row.hausdorff_mm = fold_stats(hd);
        row.fg_fraction_pct = fold_stats(fg).mean;
        rep.per_organ.push_back(row);
    }
    return rep;
}

std::string report_to_csv(const OrganReport& report, const std::string& header_comment) {
    std::ostringstream out;
    out.precision(9);
    std::istringstream hdr(header_comment);
    for (std::string line; std::getline(hdr, line);) out << "# " << line << "\n";
    out << "# stddev convention: population\n";
    out << "case_id,organ,dice,jaccard,fpr_pos,fpr_tn,fnr,hd_mm,fg_fraction\n";
    for (const auto& r : report.rows) {
        out << r.case_id << ',' << r.organ << ',' << r.dice << ',' << r.jaccard << ','
            << r.fpr_pos << ',' << r.fpr_tn << ',' << r.fnr << ',';
        if (r.hd_mm) out << *r.hd_mm;
        out << ',' << r.fg_fraction_pct << "\n";
    }
    return out.str();
}

}  // namespace combo
