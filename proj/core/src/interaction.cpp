#include "hexadapt/interaction.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

namespace hexadapt {

const char* to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::kSurfacePuncture: return "surface_puncture";
    case ConstraintKind::kNeedleTip: return "needle_tip";
    case ConstraintKind::kShaft: return "shaft";
  }
  return "?";
}

const char* to_string(ContactState state) {
  switch (state) {
    case ContactState::kInactive: return "inactive";
    case ContactState::kStick: return "stick";
    case ContactState::kSlip: return "slip";
    case ContactState::kCut: return "cut";
  }
  return "?";
}

void ContactParameters::validate() const {
  if (!(mu_surface >= 0.0)) throw InvalidArgument("mu_surface must be >= 0");
  if (!(mu_shaft >= 0.0)) throw InvalidArgument("mu_shaft must be >= 0");
  if (!(puncture_strength >= 0.0)) throw InvalidArgument("puncture_strength must be >= 0");
  if (cut_strength && !(*cut_strength >= 0.0)) throw InvalidArgument("cut_strength must be >= 0");
  if (!(shaft_normal_force >= 0.0)) throw InvalidArgument("shaft_normal_force must be >= 0");
  if (!(contact_tolerance >= 0.0)) throw InvalidArgument("contact_tolerance must be >= 0");
  if (!(penalty_scale > 0.0)) throw InvalidArgument("penalty_scale must be > 0");
  if (!(tolerance > 0.0)) throw InvalidArgument("tolerance must be > 0");
  if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
}

std::size_t ConstraintSet::count(ConstraintKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(points.begin(), points.end(), [&](const ConstraintPoint& p) { return p.kind == kind; }));
}

std::size_t row_count(const ConstraintPoint& p) {
  switch (p.kind) {
    case ConstraintKind::kSurfacePuncture: return p.broke_through ? 0 : 3;
    case ConstraintKind::kNeedleTip: return 3;
    case ConstraintKind::kShaft: return p.state == ContactState::kStick ? 3 : 2;
  }
  return 0;
}

Vec3 friction_projection(const Vec3& lambda, double mu, double normal, bool unilateral) {
  if (unilateral && lambda[0] < 0.0) return Vec3::Zero();
  Vec3 out = lambda;
  const double radius = mu * std::max(normal, 0.0);
  const double t = lambda.tail<2>().norm();
  if (t > radius) out.tail<2>() *= (t > 0.0 ? radius / t : 0.0);
  return out;
}

ContactState classify_state(const ConstraintPoint& p, const Vec3& lambda, const ContactParameters& params) {
  const double ln = lambda[0];
  const double lt = lambda.tail<2>().norm();
  switch (p.kind) {
    case ConstraintKind::kSurfacePuncture:
      if (ln > params.puncture_strength) return ContactState::kCut;
      if (ln <= 0.0) return ContactState::kInactive;
      return lt < params.mu_surface * ln ? ContactState::kStick : ContactState::kSlip;
    case ConstraintKind::kNeedleTip:
      return ln < params.mu_shaft * lt + params.cutting() ? ContactState::kStick : ContactState::kCut;
    case ConstraintKind::kShaft:
      return std::abs(ln) < params.mu_shaft * (lt + params.shaft_normal_force) ? ContactState::kStick
                                                                                : ContactState::kSlip;
  }
  return ContactState::kInactive;
}

void classify_states(ConstraintSet& set) {
  for (auto& p : set.points) p.state = classify_state(p, p.lambda, set.params);
}

NeedleState::NeedleState(NeedleModel m) : model(std::move(m)), velocity(VecX::Zero(static_cast<Eigen::Index>(model.num_dofs()))) {}

Vec3 NeedleState::axis() const { return (model.tip() - model.base()).normalized(); }

// ---------------------------------------------------------------------------

namespace {

Mat3 contact_frame(const Vec3& axis) {
  const Vec3 n = -axis.normalized();
  Eigen::Index k = 0;
  n.cwiseAbs().minCoeff(&k);
  const Vec3 t1 = n.cross(Vec3::Unit(k)).normalized();
  const Vec3 t2 = n.cross(t1);
  Mat3 f;
  f << n, t1, t2;
  return f;
}

std::optional<TissueAnchor> anchor_at(const TissueBody& tissue, const Vec3& p) {
  auto loc = locate_point(tissue.mesh(), tissue.positions(), p, 1e-6);
  if (!loc) return std::nullopt;
  return TissueAnchor{loc->element, loc->coord};
}

ConstraintPoint make_point(ConstraintKind kind, const TissueAnchor& anchor, const Mat3& frame, double arc) {
  ConstraintPoint p;
  p.kind = kind;
  p.anchor = anchor;
  p.frame = frame;
  p.arc = arc;
  switch (kind) {
    case ConstraintKind::kSurfacePuncture:
      p.state = ContactState::kInactive;
      p.modes = {RowMode::kInactive, RowMode::kInactive, RowMode::kInactive};
      break;
    case ConstraintKind::kNeedleTip:
      p.state = ContactState::kStick;
      p.modes = {RowMode::kEquality, RowMode::kEquality, RowMode::kEquality};
      break;
    case ConstraintKind::kShaft:
      p.state = ContactState::kSlip;
      p.modes = {RowMode::kForce, RowMode::kEquality, RowMode::kEquality};
      break;
  }
  return p;
}

double shaft_spacing(const ContactParameters& params, const NeedleModel& needle) {
  if (params.shaft_spacing > 0.0) return params.shaft_spacing;
  return 0.5 * needle.total_rest_length() / static_cast<double>(needle.num_segments());
}

}  // namespace

void detect_and_update_constraints(TissueBody& tissue, const NeedleState& needle, ConstraintSet& set,
                                   bool advancing) {
  const Vec3 axis = needle.axis();
  const Vec3 tip = needle.model.tip();
  const double tip_arc = needle.model.total_rest_length();
  const Mat3 frame = contact_frame(axis);
  auto& pts = set.points;

  // A point that broke during the last step is released for one step so the
  // tissue can relax; the tip point is re-created at the following detection.
  set.tip_released = false;
  for (const auto& p : pts) {
    if (!p.broke_through) continue;
    if (p.kind == ConstraintKind::kSurfacePuncture) {
      set.inside = true;
      set.entry = tip;
      set.dropped_depth = 0.0;
    }
    if (p.kind != ConstraintKind::kShaft) set.tip_released = true;
  }
  std::erase_if(pts, [](const ConstraintPoint& p) { return p.broke_through && p.kind != ConstraintKind::kShaft; });

  if (!advancing) {
    std::erase_if(pts, [&](const ConstraintPoint& p) {
      if (p.kind != ConstraintKind::kShaft) return true;
      const Vec3 x = tissue.point_position(p.anchor.element, p.anchor.coord);
      return (x - tip).dot(axis) > 0.0;
    });
    if (set.inside && (tip - set.entry).dot(axis) < 0.0 && pts.empty()) set.inside = false;
  } else if (!set.inside) {
    if (set.count(ConstraintKind::kSurfacePuncture) == 0) {
      if (auto a = anchor_at(tissue, tip + set.params.contact_tolerance * axis)) {
        pts.push_back(make_point(ConstraintKind::kSurfacePuncture, *a, frame, tip_arc));
      }
    }
  } else {
    if (set.count(ConstraintKind::kNeedleTip) == 0 && !set.tip_released) {
      if (auto a = anchor_at(tissue, tip)) pts.push_back(make_point(ConstraintKind::kNeedleTip, *a, frame, tip_arc));
    }
    const double h = shaft_spacing(set.params, needle.model);
    const double depth = (tip - set.entry).dot(axis);
    while (depth >= set.dropped_depth + h) {
      set.dropped_depth += h;
      if (auto a = anchor_at(tissue, tip)) {
        ConstraintPoint sp = make_point(ConstraintKind::kShaft, *a, frame, tip_arc);
        // Starts sliding against the insertion.
        sp.lambda[0] = set.params.mu_shaft * set.params.shaft_normal_force;
        pts.push_back(sp);
      }
    }
  }

  // Needle-side coordinates and frames follow the current configuration.
  for (auto& p : pts) {
    p.frame = frame;
    if (p.kind == ConstraintKind::kShaft) {
      p.arc = needle.model.project(tissue.point_position(p.anchor.element, p.anchor.coord));
    } else {
      p.arc = tip_arc;
    }
  }
  // Shaft points ordered by arc-length (stable for equal arcs).
  std::stable_sort(pts.begin(), pts.end(), [](const ConstraintPoint& a, const ConstraintPoint& b) {
    const int ka = a.kind == ConstraintKind::kShaft ? 1 : 0;
    const int kb = b.kind == ConstraintKind::kShaft ? 1 : 0;
    if (ka != kb) return ka < kb;
    return ka == 1 && a.arc < b.arc;
  });
}

void reanchor_after_refinement(TissueBody& tissue, ConstraintSet& set) {
  const HexMesh& mesh = tissue.mesh();
  for (auto& p : set.points) {
    int guard = 0;
    while (!mesh.is_live(p.anchor.element)) {
      const RefinementRecord* rec = tissue.history().find(p.anchor.element);
      if (!rec || ++guard > 64) throw StaleReference("reanchor_after_refinement: anchor element is gone");
      const auto [child, coord] = locate_in_children(find_template(rec->template_name), p.anchor.coord);
      p.anchor = {rec->children[child], coord};
    }
  }
}

bool anchors_block_coarsening(const HexMesh& mesh, const ConstraintSet& set, ElemId parent) {
  return std::any_of(set.points.begin(), set.points.end(), [&](const ConstraintPoint& p) {
    return mesh.element(p.anchor.element).parent == parent;
  });
}

ConstraintJacobian assemble_jacobians(TissueBody& tissue, const NeedleState& needle,
                                      const ConstraintSet& set, double tau, const VecX& diag_a,
                                      const std::vector<char>& fixed, const VecX& prescribed) {
  const Eigen::Index n1 = tissue.num_reduced_dofs();
  const Eigen::Index n2 = static_cast<Eigen::Index>(needle.model.num_dofs());
  const Eigen::Index n = n1 + n2;
  if (diag_a.size() != n || static_cast<Eigen::Index>(fixed.size()) != n || prescribed.size() != n) {
    throw InvalidArgument("assemble_jacobians: dimension mismatch");
  }
  ConstraintJacobian out;
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::Index row = 0;
  for (std::size_t pi = 0; pi < set.points.size(); ++pi) {
    const ConstraintPoint& p = set.points[pi];
    if (p.kind == ConstraintKind::kSurfacePuncture && p.broke_through) continue;
    const auto tw = tissue.point_weights(p.anchor.element, p.anchor.coord);
    const ArcLocation loc = needle.model.locate_arc(p.arc);
    const std::array<std::pair<std::size_t, double>, 2> nw{
        std::pair{loc.segment, 1.0 - loc.t}, std::pair{loc.segment + 1, loc.t}};
    const Vec3 xt = tissue.point_position(p.anchor.element, p.anchor.coord);
    const Vec3 vt = tissue.point_velocity(p.anchor.element, p.anchor.coord);
    Vec3 xn = Vec3::Zero(), vn = Vec3::Zero();
    for (const auto& [node, w] : nw) {
      xn += w * needle.model.position(node);
      vn += w * needle.velocity.segment<3>(6 * static_cast<Eigen::Index>(node));
    }
    for (int dir = 0; dir < 3; ++dir) {
      const Vec3 d = p.frame.col(dir);
      std::map<Eigen::Index, double> entries;
      for (const auto& [r, w] : tw) {
        for (int k = 0; k < 3; ++k) entries[3 * r + k] -= w * d[k];
      }
      for (const auto& [node, w] : nw) {
        for (int k = 0; k < 3; ++k) entries[n1 + 6 * static_cast<Eigen::Index>(node) + k] += w * d[k];
      }
      ConstraintRow cr;
      cr.point = pi;
      cr.direction = dir;
      cr.velocity = d.dot(vn - vt);
      // Sliding along the shaft carries no positional memory.
      cr.gap = (p.kind == ConstraintKind::kShaft && dir == 0) ? 0.0 : d.dot(xn - xt);
      double prescribed_part = 0.0, diag_sum = 0.0;
      int support = 0;
      for (const auto& [col, value] : entries) {
        if (value == 0.0) continue;
        if (fixed[static_cast<std::size_t>(col)]) {
          prescribed_part += value * prescribed[col];
          continue;
        }
        trips.emplace_back(row, col, value);
        diag_sum += diag_a[col];
        ++support;
      }
      cr.target = -cr.velocity - cr.gap / tau - prescribed_part;
      cr.weight = set.params.penalty_scale * (support > 0 ? diag_sum / support : 1.0);
      out.rows.push_back(cr);
      ++row;
    }
  }
  out.j.resize(row, n);
  out.j.setFromTriplets(trips.begin(), trips.end());
  return out;
}

// ---------------------------------------------------------------------------

std::pair<VecX, VecX> uzawa_step(const Eigen::SparseMatrix<double>& a, const VecX& b,
                                 const Eigen::SparseMatrix<double>& j, const VecX& w, const VecX& g,
                                 const VecX& lambda) {
  if (j.cols() != a.rows() || w.size() != j.rows() || g.size() != j.rows() || lambda.size() != j.rows()) {
    throw InvalidArgument("uzawa_step: dimension mismatch");
  }
  const Eigen::SparseMatrix<double> jt = j.transpose();
  const Eigen::SparseMatrix<double> m = a + jt * w.asDiagonal() * j;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(m);
  if (ldlt.info() != Eigen::Success) throw SolverFailure("uzawa_step: factorization failed", 1.0, 0);
  const VecX rhs = b + jt * (lambda + w.cwiseProduct(g));
  VecX dv = ldlt.solve(rhs);
  VecX next = lambda - w.cwiseProduct(j * dv - g);
  return {std::move(dv), std::move(next)};
}

UzawaResult uzawa_solve_bilateral(const Eigen::SparseMatrix<double>& a, const VecX& b,
                                  const Eigen::SparseMatrix<double>& j, const VecX& w, const VecX& g,
                                  double tol, int max_iterations) {
  UzawaResult r;
  r.lambda = VecX::Zero(j.rows());
  if (j.rows() == 0) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a);
    r.dv = ldlt.solve(b);
    return r;
  }
  for (r.iterations = 1; r.iterations <= max_iterations; ++r.iterations) {
    auto [dv, next] = uzawa_step(a, b, j, w, g, r.lambda);
    r.residual = (next - r.lambda).lpNorm<Eigen::Infinity>();
    r.dv = std::move(dv);
    r.lambda = std::move(next);
    if (r.residual < tol * std::max(1.0, r.lambda.lpNorm<Eigen::Infinity>())) return r;
  }
  throw ContactSolverFailure("uzawa_solve_bilateral: iteration cap reached", r.residual, max_iterations);
}

DelassusSolver::DelassusSolver(const Solve& solve_a, const VecX& b,
                               const Eigen::SparseMatrix<double, Eigen::RowMajor>& j) {
  z_ = solve_a(b);
  const Eigen::Index m = j.rows();
  y_.resize(b.size(), m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const VecX col = VecX(j.row(r).transpose());
    y_.col(r) = solve_a(col);
  }
  d_ = j * y_;
  d_ = 0.5 * (d_ + d_.transpose()).eval();
  c_ = j * z_;
}

VecX DelassusSolver::reduced_multiplier(const VecX& lambda, const std::vector<char>& equality,
                                        const VecX& w, const VecX& g, VecX* q_out) const {
  const Eigen::Index m = lambda.size();
  VecX q = lambda;
  std::vector<Eigen::Index> e;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (equality[static_cast<std::size_t>(i)]) {
      q[i] += w[i] * g[i];
      e.push_back(i);
    }
  }
  const auto ne = static_cast<Eigen::Index>(e.size());
  VecX s = VecX::Zero(m);
  if (ne > 0) {
    MatX me(ne, ne);
    VecX rhs(ne);
    const VecX dq = d_ * q;
    for (Eigen::Index a = 0; a < ne; ++a) {
      rhs[a] = c_[e[a]] + dq[e[a]];
      for (Eigen::Index b = 0; b < ne; ++b) me(a, b) = d_(e[a], e[b]);
      me(a, a) += 1.0 / w[e[a]];
    }
    const VecX se = me.ldlt().solve(rhs);
    for (Eigen::Index a = 0; a < ne; ++a) s[e[a]] = se[a];
  }
  *q_out = std::move(q);
  return s;
}

VecX DelassusSolver::constraint_velocity(const VecX& lambda, const std::vector<char>& equality, const VecX& w,
                                         const VecX& g) const {
  VecX q;
  const VecX s = reduced_multiplier(lambda, equality, w, g, &q);
  return c_ + d_ * (q - s);
}

VecX DelassusSolver::velocity(const VecX& lambda, const std::vector<char>& equality, const VecX& w,
                              const VecX& g) const {
  if (lambda.size() == 0) return z_;
  VecX q;
  const VecX s = reduced_multiplier(lambda, equality, w, g, &q);
  return z_ + y_ * (q - s);
}

// ---------------------------------------------------------------------------

namespace {

struct PointRows {
  std::array<Eigen::Index, 3> r{-1, -1, -1};
};

ContactState settle_state(const ConstraintPoint& p) {
  switch (p.kind) {
    case ConstraintKind::kSurfacePuncture:
      if (p.broke_through) return ContactState::kCut;
      if (p.modes[0] == RowMode::kInactive) return ContactState::kInactive;
      return p.modes[1] == RowMode::kForce ? ContactState::kSlip : ContactState::kStick;
    case ConstraintKind::kNeedleTip:
      return p.broke_through ? ContactState::kCut : ContactState::kStick;
    case ConstraintKind::kShaft:
      return p.modes[0] == RowMode::kForce ? ContactState::kSlip : ContactState::kStick;
  }
  return ContactState::kInactive;
}

VecX solve_contact_impl(const DelassusSolver& solver, const ConstraintJacobian& jac, ConstraintSet& set,
                        ContactSolveReport* report, bool throw_on_cap) {
  const auto m = static_cast<Eigen::Index>(jac.rows.size());
  ContactSolveReport rep;
  if (m == 0) {
    if (report) *report = rep;
    return solver.velocity(VecX(), {}, VecX(), VecX());
  }
  const ContactParameters& prm = set.params;
  VecX lambda(m), w(m), g(m), jv(m);
  std::vector<RowMode> mode(static_cast<std::size_t>(m));
  std::vector<PointRows> rows_of(set.points.size());
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto& cr = jac.rows[static_cast<std::size_t>(r)];
    const auto& p = set.points[cr.point];
    rows_of[cr.point].r[static_cast<std::size_t>(cr.direction)] = r;
    lambda[r] = p.lambda[cr.direction];
    mode[static_cast<std::size_t>(r)] = p.modes[static_cast<std::size_t>(cr.direction)];
    w[r] = cr.weight;
    g[r] = cr.target;
    jv[r] = cr.velocity;
  }
  for (Eigen::Index r = 0; r < m; ++r) {
    if (mode[static_cast<std::size_t>(r)] == RowMode::kInactive) lambda[r] = 0.0;
  }
  const double v_scale = std::max(jv.lpNorm<Eigen::Infinity>(), g.lpNorm<Eigen::Infinity>());
  const double v_eps = 1e-12 + 1e-9 * v_scale;

  auto equality_mask = [&] {
    std::vector<char> eq(static_cast<std::size_t>(m));
    for (Eigen::Index r = 0; r < m; ++r) eq[static_cast<std::size_t>(r)] = mode[static_cast<std::size_t>(r)] == RowMode::kEquality;
    return eq;
  };

  bool converged = false;
  int it = 0;
  double residual = 0.0;
  for (it = 1; it <= prm.max_iterations; ++it) {
    const std::vector<char> eq = equality_mask();
    const VecX u = solver.constraint_velocity(lambda, eq, w, g);
    VecX next = lambda;
    for (Eigen::Index r = 0; r < m; ++r) {
      if (eq[static_cast<std::size_t>(r)]) next[r] = lambda[r] - w[r] * (u[r] - g[r]);
    }
    const std::vector<RowMode> before = mode;
    const VecX rel = jv + u;  // relative velocity at the end of the step

    for (std::size_t pi = 0; pi < set.points.size(); ++pi) {
      ConstraintPoint& p = set.points[pi];
      const auto& rr = rows_of[pi].r;
      if (rr[0] < 0) continue;
      const Eigen::Index rn = rr[0], r1 = rr[1], r2 = rr[2];
      auto md = [&](Eigen::Index r) -> RowMode& { return mode[static_cast<std::size_t>(r)]; };

      if (p.kind == ConstraintKind::kSurfacePuncture) {
        if (md(rn) == RowMode::kEquality && next[rn] < 0.0) {
          md(rn) = RowMode::kInactive;
        } else if (md(rn) == RowMode::kInactive && u[rn] < g[rn] - v_eps) {
          md(rn) = RowMode::kEquality;
        }
        if (md(rn) == RowMode::kInactive) {
          next[rn] = next[r1] = next[r2] = 0.0;
          md(r1) = md(r2) = RowMode::kInactive;
          continue;
        }
        const double ln = std::max(next[rn], 0.0);
        Eigen::Vector2d lt(next[r1], next[r2]);
        if (md(r1) != RowMode::kForce) {
          md(r1) = md(r2) = RowMode::kEquality;
          if (lt.norm() > prm.mu_surface * ln) {
            md(r1) = md(r2) = RowMode::kForce;
            lt *= lt.norm() > 0.0 ? prm.mu_surface * ln / lt.norm() : 0.0;
          }
        } else {
          // Projected step onto the friction disk; back to stick once inside it.
          const Eigen::Vector2d trial(lambda[r1] - w[r1] * rel[r1], lambda[r2] - w[r2] * rel[r2]);
          const double bound = prm.mu_surface * ln;
          if (trial.norm() > bound) {
            lt = bound * trial / trial.norm();
          } else {
            lt = trial;
            md(r1) = md(r2) = RowMode::kEquality;
          }
        }
        next[r1] = lt[0];
        next[r2] = lt[1];
        continue;
      }

      if (p.kind == ConstraintKind::kNeedleTip) {
        md(r1) = md(r2) = RowMode::kEquality;
        if (md(rn) == RowMode::kEquality && next[rn] < 0.0) {
          md(rn) = RowMode::kInactive;
          next[rn] = 0.0;
        } else if (md(rn) == RowMode::kInactive) {
          if (u[rn] < g[rn] - v_eps) md(rn) = RowMode::kEquality;
          next[rn] = 0.0;
        }
        continue;
      }

      // Shaft: transverse rows bilateral, axial row sticks or slides.
      md(r1) = md(r2) = RowMode::kEquality;
      const double normal = Eigen::Vector2d(next[r1], next[r2]).norm() + prm.shaft_normal_force;
      const double limit = prm.mu_shaft * normal;
      if (limit <= 0.0 || set.motion != 0) {
        md(rn) = RowMode::kForce;
        next[rn] = set.motion * limit;
      } else if (md(rn) == RowMode::kEquality) {
        if (std::abs(next[rn]) > limit) {
          md(rn) = RowMode::kForce;
          next[rn] = std::copysign(limit, next[rn]);
        }
      } else {
        // Keeps sliding in its direction until the relative velocity stops opposing it.
        const double dir = lambda[rn] != 0.0 ? std::copysign(1.0, lambda[rn]) : -std::copysign(1.0, rel[rn]);
        if (rel[rn] * dir < -v_eps) {
          next[rn] = dir * limit;
        } else {
          md(rn) = RowMode::kEquality;
        }
      }
    }

    residual = (next - lambda).lpNorm<Eigen::Infinity>();
    lambda = std::move(next);
    const bool same_modes = before == mode;
    if (same_modes && residual < prm.tolerance * std::max(1.0, lambda.lpNorm<Eigen::Infinity>())) {
      converged = true;
      break;
    }
  }
  rep.iterations = std::min(it, prm.max_iterations);
  rep.residual = residual;
  rep.converged = converged;
  if (!converged && throw_on_cap) {
    throw ContactSolverFailure("solve_contact: iteration cap reached", residual, prm.max_iterations);
  }

  for (Eigen::Index r = 0; r < m; ++r) {
    const auto& cr = jac.rows[static_cast<std::size_t>(r)];
    auto& p = set.points[cr.point];
    p.lambda[cr.direction] = lambda[r];
    p.modes[static_cast<std::size_t>(cr.direction)] = mode[static_cast<std::size_t>(r)];
  }
  // Breaking is decided on the converged multipliers; the point is released at
  // the next detection.
  for (auto& p : set.points) {
    if (p.modes[0] != RowMode::kEquality) continue;
    if (p.kind == ConstraintKind::kSurfacePuncture && p.lambda[0] > prm.puncture_strength) p.broke_through = true;
    if (p.kind == ConstraintKind::kNeedleTip &&
        p.lambda[0] >= prm.mu_shaft * Eigen::Vector2d(p.lambda[1], p.lambda[2]).norm() + prm.cutting()) {
      p.broke_through = true;
    }
  }
  for (auto& p : set.points) p.state = settle_state(p);
  if (report) *report = rep;
  return solver.velocity(lambda, equality_mask(), w, g);
}

}  // namespace

VecX solve_contact(const DelassusSolver& solver, const ConstraintJacobian& jac, ConstraintSet& set,
                   ContactSolveReport* report) {
  return solve_contact_impl(solver, jac, set, report, true);
}

ReducedStep needle_step_system(const NeedleState& needle, double tau, const Vec6& base_velocity) {
  const auto& model = needle.model;
  const Eigen::SparseMatrix<double> k = needle_stiffness(model);
  const Eigen::SparseMatrix<double> mass = diagonal_matrix(needle_lumped_mass(model));
  const Eigen::SparseMatrix<double> c = damping_matrix(k, mass, model.material());
  const VecX f = -needle_corotational_force(model) - c * needle.velocity;
  SteppingSystem s = assemble_step(mass, c, k, f, needle.velocity, tau);
  DirichletSet d;
  for (int i = 0; i < 6; ++i) d.add(i, base_velocity[i] - needle.velocity[i]);
  apply_dirichlet(s.a, s.b, d);
  ReducedStep out;
  out.a = std::move(s.a);
  out.b = std::move(s.b);
  out.fixed.assign(static_cast<std::size_t>(out.b.size()), 0);
  for (int i = 0; i < 6; ++i) out.fixed[static_cast<std::size_t>(i)] = 1;
  return out;
}

CoupledStepReport coupled_step(TissueBody& tissue, NeedleState& needle, ConstraintSet& set, double tau,
                               const Vec6& base_velocity) {
  CoupledStepReport rep;
  const Vec3 axis = needle.axis();
  const double axial_speed = base_velocity.head<3>().dot(axis);
  const bool advancing = axial_speed >= 0.0;
  set.motion = axial_speed > 0.0 ? 1 : axial_speed < 0.0 ? -1 : 0;
  detect_and_update_constraints(tissue, needle, set, advancing);

  const auto t0 = std::chrono::steady_clock::now();
  ReducedStep ts = tissue.build_step(tau);
  ReducedStep ns = needle_step_system(needle, tau, base_velocity);
  const Eigen::Index n1 = ts.b.size(), n2 = ns.b.size();

  const FactorizedSystem f1(ts.a), f2(ns.a);
  // The step is solved as (A / tau) dv = b / tau + J^T lambda so multipliers are forces.
  auto solve = [&](const VecX& rhs) {
    VecX out(n1 + n2);
    out.head(n1) = tau * f1.solve(rhs.head(n1));
    out.tail(n2) = tau * f2.solve(rhs.tail(n2));
    return out;
  };
  VecX b(n1 + n2), diag(n1 + n2), prescribed = VecX::Zero(n1 + n2);
  b << ts.b, ns.b;
  diag << VecX(ts.a.diagonal()), VecX(ns.a.diagonal());
  diag /= tau;
  std::vector<char> fixed(ts.fixed);
  fixed.insert(fixed.end(), ns.fixed.begin(), ns.fixed.end());
  for (Eigen::Index i = 0; i < n1 + n2; ++i) {
    if (fixed[static_cast<std::size_t>(i)]) prescribed[i] = b[i];
  }
  b /= tau;

  const ConstraintJacobian jac = assemble_jacobians(tissue, needle, set, tau, diag, fixed, prescribed);
  const DelassusSolver solver(solve, b, jac.j);
  ContactSolveReport cr;
  const VecX dv = solve_contact_impl(solver, jac, set, &cr, false);
  rep.uzawa_iterations = cr.iterations;
  rep.uzawa_residual = cr.residual;
  rep.contact_failed = !cr.converged;
  rep.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  for (const auto& row : jac.rows) {
    const auto& p = set.points[row.point];
    const Vec3 f = p.lambda[row.direction] * p.frame.col(row.direction);
    rep.force_on_needle += f;
    const double axial = -f.dot(axis);
    switch (p.kind) {
      case ConstraintKind::kSurfacePuncture: rep.surface_force += axial; break;
      case ConstraintKind::kNeedleTip: rep.tip_force += axial; break;
      case ConstraintKind::kShaft: rep.shaft_force += axial; break;
    }
  }
  rep.force_on_tissue = -rep.force_on_needle;
  rep.axial_force = rep.surface_force + rep.tip_force + rep.shaft_force;
  rep.surface_points = set.count(ConstraintKind::kSurfacePuncture);
  rep.tip_points = set.count(ConstraintKind::kNeedleTip);
  rep.shaft_points = set.count(ConstraintKind::kShaft);

  tissue.apply_step(dv.head(n1), tau);
  needle.velocity += dv.tail(n2);
  needle.model.advance(needle.velocity, tau);
  return rep;
}

}  // namespace hexadapt
