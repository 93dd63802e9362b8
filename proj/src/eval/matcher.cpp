#include <algorithm>
#include <cmath>
#include <fmt/core.h>
#include <map>
#include <mcf/core/error.h>
#include <mcf/eval/matcher.h>
#include <mcf/eval/niggli.h>
#include <mcf/hungarian.h>
#include <mcf/manifold.h>
#include <set>

namespace mcf::eval {

namespace mf = mcf::manifold;

void MatchCriteria::validate() const {
  if (!(ltol > 0.0 && stol > 0.0 && atol > 0.0) || max_translations < 1)
    throw Error(ErrorKind::InvalidParameter, "match tolerances must be > 0");
}

namespace {

double angle_deg(const Vec3 &u, const Vec3 &v) {
  const double c = u.dot(v) / (u.norm() * v.norm());
  return rad2deg(std::acos(std::clamp(c, -1.0, 1.0)));
}

struct Correspondence {
  Lattice cell; // basis of lattice 2 matching the reduced lattice 1
  double length_dev;
  double angle_dev;
};

std::vector<Correspondence> lattice_correspondences(const Lattice &l1,
                                                    const Lattice &l2,
                                                    const MatchCriteria &crit) {
  const double v2 = std::abs(l2.determinant());
  std::vector<Vec3> vecs;
  for (int i = -2; i <= 2; i++)
    for (int j = -2; j <= 2; j++)
      for (int k = -2; k <= 2; k++)
        if (i || j || k)
          vecs.push_back((RowVec3(i, j, k) * l2).transpose());

  std::array<Vec3, 3> target;
  std::array<std::vector<std::pair<Vec3, double>>, 3> cands;
  for (int r = 0; r < 3; r++) {
    target[r] = l1.row(r).transpose();
    const double len = target[r].norm();
    for (const auto &v : vecs) {
      const double dev = std::abs(v.norm() / len - 1.0);
      if (dev <= crit.ltol)
        cands[r].emplace_back(v, dev);
    }
  }
  const double alpha = angle_deg(target[1], target[2]);
  const double beta = angle_deg(target[0], target[2]);
  const double gamma = angle_deg(target[0], target[1]);

  std::vector<Correspondence> out;
  for (const auto &[va, da] : cands[0])
    for (const auto &[vb, db] : cands[1]) {
      const double dg = std::abs(angle_deg(va, vb) - gamma);
      if (dg > crit.atol)
        continue;
      for (const auto &[vc, dc] : cands[2]) {
        const double dal = std::abs(angle_deg(vb, vc) - alpha);
        const double dbe = std::abs(angle_deg(va, vc) - beta);
        if (dal > crit.atol || dbe > crit.atol)
          continue;
        Lattice m;
        m.row(0) = va.transpose();
        m.row(1) = vb.transpose();
        m.row(2) = vc.transpose();
        const double det = m.determinant();
        // proper, primitive bases only
        if (det <= 0.0 || std::abs(det - v2) > 1e-6 * v2)
          continue;
        out.push_back({m, std::max({da, db, dc}), std::max({dg, dal, dbe})});
      }
    }
  return out;
}

Lattice cholesky_form(const Lattice &l) {
  return mf::params_to_lattice(mf::lattice_params(l));
}

MatN3 fractional(const MatN3 &cart, const Lattice &l) {
  MatN3 f = cart * l.inverse();
  for (Eigen::Index i = 0; i < f.rows(); i++)
    f.row(i) = mf::wrap(f.row(i).transpose()).transpose();
  return f;
}

Vec3 frac_min_image(const Vec3 &d) {
  Vec3 out = d;
  for (int k = 0; k < 3; k++)
    out(k) -= std::round(out(k));
  return out;
}

} // namespace

MatchReport match_onto(const crystal::AtomicStructure &s1,
                       const crystal::AtomicStructure &s2,
                       const MatchCriteria &crit) {
  crit.validate();
  s1.validate();
  s2.validate();
  MatchReport report;
  if (s1.size() != s2.size() || s1.size() == 0)
    return report;
  {
    auto a = s1.species, b = s2.species;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b)
      return report;
  }
  const Lattice l1 = niggli_reduce(s1.lattice);
  const Lattice l2 = niggli_reduce(s2.lattice);
  const auto corrs = lattice_correspondences(l1, l2, crit);
  report.correspondences = static_cast<int>(corrs.size());
  if (corrs.empty())
    return report;

  // species groups and the anchor species (least frequent)
  std::map<std::string, std::vector<int>> g1, g2;
  for (std::size_t i = 0; i < s1.size(); i++) {
    g1[s1.species[i]].push_back(static_cast<int>(i));
    g2[s2.species[i]].push_back(static_cast<int>(i));
  }
  std::string anchor = g1.begin()->first;
  for (const auto &[sp, idx] : g1)
    if (idx.size() < g1[anchor].size())
      anchor = sp;

  const MatN3 f1 = fractional(s1.cart, l1);
  const auto n = static_cast<double>(s1.size());
  double best_max = std::numeric_limits<double>::infinity();
  for (const auto &corr : corrs) {
    const MatN3 f2 = fractional(s2.cart, corr.cell);
    const Lattice avg = 0.5 * (cholesky_form(l1) + cholesky_form(corr.cell));
    const double norm = std::cbrt(std::abs(avg.determinant()) / n);
    const Vec3 f1_anchor = f1.row(g1[anchor][0]).transpose();

    std::vector<std::pair<double, Vec3>> shifts;
    for (int j : g2[anchor]) {
      const Vec3 d = frac_min_image(f1_anchor - f2.row(j).transpose());
      shifts.emplace_back((d.transpose() * avg).norm(), d);
    }
    std::stable_sort(shifts.begin(), shifts.end(),
                     [](const auto &x, const auto &y) { return x.first < y.first; });
    if (static_cast<int>(shifts.size()) > crit.max_translations) {
      shifts.resize(crit.max_translations);
      report.translation_cap_hit = true;
    }

    for (const auto &[dist, shift] : shifts) {
      report.candidates_examined++;
      // per-species optimal assignment on minimum-image distances
      std::vector<Vec3> disp;
      for (const auto &[sp, idx1] : g1) {
        const auto &idx2 = g2[sp];
        const auto k = static_cast<Eigen::Index>(idx1.size());
        Mat cost(k, k);
        std::vector<Vec3> dmat(static_cast<std::size_t>(k * k));
        for (Eigen::Index a = 0; a < k; a++)
          for (Eigen::Index b = 0; b < k; b++) {
            const Vec3 d = frac_min_image(f2.row(idx2[b]).transpose() + shift -
                                          f1.row(idx1[a]).transpose());
            dmat[a * k + b] = d;
            cost(a, b) = (d.transpose() * avg).squaredNorm();
          }
        const auto assign = hungarian(cost);
        for (Eigen::Index a = 0; a < k; a++)
          disp.push_back(dmat[a * k + assign[a]]);
      }
      // remove the residual rigid translation
      Vec3 mean = Vec3::Zero();
      for (const auto &d : disp)
        mean += d;
      mean /= n;
      double sq = 0.0, mx = 0.0;
      for (const auto &d : disp) {
        const double len = ((d - mean).transpose() * avg).norm();
        sq += len * len;
        mx = std::max(mx, len);
      }
      const double rms = std::sqrt(sq / n) / norm;
      mx /= norm;
      if (mx < best_max) {
        best_max = mx;
        report.length_deviation = corr.length_dev;
        report.angle_deviation = corr.angle_dev;
      }
      report.rms = std::min(report.rms, rms);
    }
  }
  report.max_dist = best_max;
  report.matched = best_max <= crit.stol;
  return report;
}

MatchReport structures_match(const crystal::AtomicStructure &s1,
                             const crystal::AtomicStructure &s2,
                             const MatchCriteria &crit) {
  MatchReport a = match_onto(s1, s2, crit);
  MatchReport b = match_onto(s2, s1, crit);
  MatchReport out = a.max_dist <= b.max_dist ? a : b;
  out.matched = a.matched || b.matched;
  out.rms = std::min(a.rms, b.rms);
  out.correspondences = a.correspondences + b.correspondences;
  out.candidates_examined = a.candidates_examined + b.candidates_examined;
  out.translation_cap_hit = a.translation_cap_hit || b.translation_cap_hit;
  return out;
}

MatchRate match_rate(const std::vector<TargetPredictions> &predictions,
                     const std::vector<crystal::AtomicStructure> &references,
                     const MatchCriteria &crit) {
  std::map<std::string, const crystal::AtomicStructure *> refs;
  for (const auto &r : references)
    refs[r.id] = &r;
  std::set<std::string> pred_ids;
  std::vector<std::string> missing;
  for (const auto &p : predictions) {
    pred_ids.insert(p.id);
    if (!refs.count(p.id))
      missing.push_back(p.id);
  }
  for (const auto &[id, ptr] : refs)
    if (!pred_ids.count(id))
      missing.push_back(id);
  if (!missing.empty()) {
    std::string list;
    for (const auto &id : missing)
      list += (list.empty() ? "" : ", ") + id;
    throw Error(ErrorKind::InvalidInput, "id mismatch between predictions and references: " + list);
  }
  MatchRate out;
  if (predictions.empty())
    return out;
  int hits = 0;
  for (const auto &p : predictions) {
    TargetResult tr;
    tr.id = p.id;
    tr.n_samples = static_cast<int>(p.samples.size());
    for (std::size_t k = 0; k < p.samples.size(); k++) {
      const auto rep = structures_match(*refs[p.id], p.samples[k], crit);
      tr.best_rms = std::min(tr.best_rms, rep.rms);
      if (rep.matched && tr.first_match < 0) {
        tr.first_match = static_cast<int>(k);
        tr.matched = true;
      }
    }
    hits += tr.matched ? 1 : 0;
    out.targets.push_back(tr);
  }
  out.rate = static_cast<double>(hits) / static_cast<double>(predictions.size());
  return out;
}

VolumeDeviation volume_rmad(const std::vector<Lattice> &predictions,
                            const std::vector<Lattice> &references) {
  if (predictions.size() != references.size())
    throw Error(ErrorKind::InvalidInput, "volume_rmad: unpaired structures");
  VolumeDeviation out;
  for (std::size_t i = 0; i < predictions.size(); i++) {
    const double vr = std::abs(references[i].determinant());
    const double vp = std::abs(predictions[i].determinant());
    out.per_structure.push_back(std::abs(vp - vr) / vr * 100.0);
  }
  if (!out.per_structure.empty()) {
    double s = 0.0;
    for (double x : out.per_structure)
      s += x;
    out.mean_percent = s / static_cast<double>(out.per_structure.size());
  }
  return out;
}

} // namespace mcf::eval
