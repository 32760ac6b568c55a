#include "mmpt/losses.hpp"

#include <cmath>
#include <cstddef>

#include "mmpt/attributes.hpp"
#include "mmpt/crystal.hpp"
#include "mmpt/errors.hpp"

namespace mmpt {

namespace {

Tensor mean_of(const std::vector<Tensor>& terms) {
  if (terms.empty()) return Tensor::scalar(0.0);
  Tensor acc = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return scalar_mul(acc, 1.0 / static_cast<double>(terms.size()));
}

Tensor half_sum(const Tensor& a, const Tensor& b) { return scalar_mul(add(a, b), 0.5); }

Tensor one_hot_rows(const std::vector<int>& classes, int num_classes) {
  std::vector<double> v(classes.size() * static_cast<size_t>(num_classes), 0.0);
  for (size_t i = 0; i < classes.size(); ++i) {
    int c = classes[i];
    if (c < 0 || c >= num_classes)
      throw Error(ErrorKind::IndexOutOfRange, "class label out of range");
    v[i * static_cast<size_t>(num_classes) + static_cast<size_t>(c)] = 1.0;
  }
  return Tensor::constant({classes.size(), static_cast<size_t>(num_classes)}, std::move(v));
}

const std::vector<int>& view_subset(const MutexMasks& masks, bool penalize_m) {
  return penalize_m ? masks.m : masks.m_bar;
}

}  // namespace

Tensor masked_atom_ce(const Tensor& logits, const BatchGraph& batch,
                      const std::vector<MutexMasks>& masks, bool penalize_m) {
  if (masks.size() != batch.num_crystals)
    throw Error(ErrorKind::InvalidArgument, "mask count does not match batch");
  Tensor lp = tlog(softmax(logits));
  std::vector<Tensor> terms;
  for (size_t b = 0; b < batch.num_crystals; ++b) {
    const std::vector<int>& subset = view_subset(masks[static_cast<size_t>(b)], penalize_m);
    if (subset.empty()) continue;
    int offset = batch.node_offset[static_cast<size_t>(b)];
    std::vector<int> rows;
    std::vector<int> classes;
    rows.reserve(subset.size());
    classes.reserve(subset.size());
    for (int local : subset) {
      rows.push_back(offset + local);
      classes.push_back(batch.atom_z[static_cast<size_t>(offset + local)]);
    }
    Tensor picked = mul(gather_rows(lp, rows), one_hot_rows(classes, kNumClasses));
    terms.push_back(scalar_mul(sum(picked), -1.0 / static_cast<double>(subset.size())));
  }
  return mean_of(terms);
}

Tensor masked_coord_mae(const Tensor& pred, const BatchGraph& batch,
                        const std::vector<MutexMasks>& masks, bool penalize_m) {
  if (masks.size() != batch.num_crystals)
    throw Error(ErrorKind::InvalidArgument, "mask count does not match batch");
  Tensor target = Tensor::constant({batch.center_distance.size(), 1}, batch.center_distance);
  Tensor err = tabs(sub(pred, target));
  std::vector<Tensor> terms;
  for (size_t b = 0; b < batch.num_crystals; ++b) {
    const std::vector<int>& subset = view_subset(masks[static_cast<size_t>(b)], penalize_m);
    if (subset.empty()) continue;
    int offset = batch.node_offset[static_cast<size_t>(b)];
    std::vector<int> rows;
    rows.reserve(subset.size());
    for (int local : subset) rows.push_back(offset + local);
    terms.push_back(
        scalar_mul(sum(gather_rows(err, rows)), 1.0 / static_cast<double>(subset.size())));
  }
  return mean_of(terms);
}

Tensor loss_atom(const Tensor& logits_m, const Tensor& logits_mbar,
                 const BatchGraph& batch, const std::vector<MutexMasks>& masks) {
  return half_sum(masked_atom_ce(logits_m, batch, masks, true),
                  masked_atom_ce(logits_mbar, batch, masks, false));
}

Tensor loss_coord(const Tensor& pred_m, const Tensor& pred_mbar,
                  const BatchGraph& batch, const std::vector<MutexMasks>& masks) {
  return half_sum(masked_coord_mae(pred_m, batch, masks, true),
                  masked_coord_mae(pred_mbar, batch, masks, false));
}

Tensor loss_lattice(const Tensor& pred, const BatchGraph& batch) {
  size_t b = static_cast<size_t>(batch.num_crystals);
  if (pred.rows() != b || pred.cols() != 6)
    throw Error(ErrorKind::ShapeMismatch, "lattice prediction must be B x 6");
  Tensor target = Tensor::constant({b, 6}, batch.six_reduced);
  Tensor diff = sub(pred, target);
  return mean(mul(diff, diff));
}

Tensor loss_barlow(const Tensor& proj_m, const Tensor& proj_mbar, const LossConfig& cfg) {
  if (proj_m.shape() != proj_mbar.shape() || proj_m.shape().size() != 2)
    throw Error(ErrorKind::ShapeMismatch, "projections must share an N x D shape");
  size_t n = proj_m.rows(), d = proj_m.cols();
  if (n == 0) return Tensor::scalar(0.0);
  Tensor a = proj_m, b = proj_mbar;
  if (cfg.barlow_centered) {
    Tensor ones = Tensor::constant({n, 1}, std::vector<double>(n, 1.0));
    a = sub(a, matmul(ones, reshape(mean_axis(a, 0), {1, d})));
    b = sub(b, matmul(ones, reshape(mean_axis(b, 0), {1, d})));
  }
  Tensor norm_a = tsqrt(sum_axis(mul(a, a), 0));
  Tensor norm_b = tsqrt(sum_axis(mul(b, b), 0));
  for (size_t j = 0; j < d; ++j) {
    if (norm_a.value()[j] < 1e-12 || norm_b.value()[j] < 1e-12)
      throw Error(ErrorKind::DegenerateEmbedding, "degenerate embedding dimension");
  }
  Tensor denom = matmul(reshape(norm_a, {d, 1}), reshape(norm_b, {1, d}));
  Tensor c = divide(matmul(transpose(a), b), denom);

  std::vector<double> eye(d * d, 0.0), off(d * d, 1.0);
  for (size_t j = 0; j < d; ++j) {
    eye[j * d + j] = 1.0;
    off[j * d + j] = 0.0;
  }
  Tensor eye_t = Tensor::constant({d, d}, std::move(eye));
  Tensor off_t = Tensor::constant({d, d}, std::move(off));
  Tensor diag_err = mul(sub(c, eye_t), eye_t);
  Tensor off_err = mul(c, off_t);
  return add(sum(mul(diag_err, diag_err)),
             scalar_mul(sum(mul(off_err, off_err)), cfg.barlow_lambda));
}

Tensor edge_ce_mean(const Tensor& logits, const std::vector<int>& labels, int num_classes) {
  if (labels.empty()) return Tensor::scalar(0.0);
  if (logits.rows() != labels.size() || logits.cols() != static_cast<size_t>(num_classes))
    throw Error(ErrorKind::ShapeMismatch, "edge logits shape mismatch");
  Tensor lp = tlog(softmax(logits));
  Tensor picked = mul(lp, one_hot_rows(labels, num_classes));
  return scalar_mul(sum(picked), -1.0 / static_cast<double>(labels.size()));
}

Tensor loss_direction(const Tensor& logits_m, const Tensor& logits_mbar, const BatchGraph& batch) {
  return half_sum(edge_ce_mean(logits_m, batch.edge_direction_label, kNumDirectionClasses),
                  edge_ce_mean(logits_mbar, batch.edge_direction_label, kNumDirectionClasses));
}

Tensor loss_unit_cell(const Tensor& logits_m, const Tensor& logits_mbar, const BatchGraph& batch) {
  return half_sum(edge_ce_mean(logits_m, batch.edge_unit_label, 2),
                  edge_ce_mean(logits_mbar, batch.edge_unit_label, 2));
}

Tensor loss_distance(const Tensor& pred_m, const Tensor& pred_mbar, const BatchGraph& batch) {
  size_t e = batch.edge_distance.size();
  if (e == 0) return Tensor::scalar(0.0);
  if (pred_m.rows() != e || pred_mbar.rows() != e)
    throw Error(ErrorKind::ShapeMismatch, "distance prediction shape mismatch");
  Tensor target = Tensor::constant({e, 1}, batch.edge_distance);
  Tensor mae_m = mean(tabs(sub(pred_m, target)));
  Tensor mae_mbar = mean(tabs(sub(pred_mbar, target)));
  return half_sum(mae_m, mae_mbar);
}

TotalLoss total_loss(const ViewOutputs& view_m, const ViewOutputs& view_mbar,
                     const BatchGraph& batch, const std::vector<MutexMasks>& masks,
                     const LossConfig& cfg, const LossWeights& weights,
                     bool single_view, bool use_barlow) {
  Tensor zero = Tensor::scalar(0.0);
  Tensor l_a = zero, l_x = zero, l_l = zero, l_die = zero, l_unit = zero, l_dis = zero;
  if (single_view) {
    if (weights.atom != 0.0) l_a = masked_atom_ce(view_m.atom_logits, batch, masks, true);
    if (weights.coord != 0.0) l_x = masked_coord_mae(view_m.coord_pred, batch, masks, true);
    if (weights.lattice != 0.0) l_l = loss_lattice(view_m.lattice_pred, batch);
    if (weights.direction != 0.0)
      l_die = edge_ce_mean(view_m.dir_logits, batch.edge_direction_label, kNumDirectionClasses);
    if (weights.unit_cell != 0.0)
      l_unit = edge_ce_mean(view_m.unit_logits, batch.edge_unit_label, 2);
    size_t e = batch.edge_distance.size();
    if (weights.distance != 0.0 && e > 0) {
      Tensor target = Tensor::constant({e, 1}, batch.edge_distance);
      l_dis = mean(tabs(sub(view_m.dist_pred, target)));
    }
  } else {
    if (weights.atom != 0.0)
      l_a = loss_atom(view_m.atom_logits, view_mbar.atom_logits, batch, masks);
    if (weights.coord != 0.0)
      l_x = loss_coord(view_m.coord_pred, view_mbar.coord_pred, batch, masks);
    if (weights.lattice != 0.0)
      l_l = half_sum(loss_lattice(view_m.lattice_pred, batch),
                     loss_lattice(view_mbar.lattice_pred, batch));
    if (weights.direction != 0.0)
      l_die = loss_direction(view_m.dir_logits, view_mbar.dir_logits, batch);
    if (weights.unit_cell != 0.0)
      l_unit = loss_unit_cell(view_m.unit_logits, view_mbar.unit_logits, batch);
    if (weights.distance != 0.0)
      l_dis = loss_distance(view_m.dist_pred, view_mbar.dist_pred, batch);
  }
  bool barlow_active = use_barlow && !single_view && weights.barlow != 0.0;
  Tensor l_bt = barlow_active ? loss_barlow(view_m.projection, view_mbar.projection, cfg) : zero;

  Tensor total = zero;
  if (weights.atom != 0.0) total = add(total, scalar_mul(l_a, weights.atom));
  if (weights.coord != 0.0) total = add(total, scalar_mul(l_x, weights.coord));
  if (weights.lattice != 0.0) total = add(total, scalar_mul(l_l, weights.lattice));
  if (barlow_active) total = add(total, scalar_mul(l_bt, weights.barlow));
  if (weights.direction != 0.0) total = add(total, scalar_mul(l_die, weights.direction));
  if (weights.unit_cell != 0.0) total = add(total, scalar_mul(l_unit, weights.unit_cell));
  if (weights.distance != 0.0) total = add(total, scalar_mul(l_dis, weights.distance));

  TotalLoss out;
  out.total = total;
  out.l_a = l_a;
  out.l_x = l_x;
  out.l_l = l_l;
  out.l_bt = l_bt;
  out.l_die = l_die;
  out.l_unit = l_unit;
  out.l_dis = l_dis;
  out.report = {l_a.item(), l_x.item(),   l_l.item(),   l_bt.item(),
                l_die.item(), l_unit.item(), l_dis.item(), total.item()};
  return out;
}

}  // namespace mmpt
