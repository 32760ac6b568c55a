#pragma once

#include <vector>

#include "mmpt/masking.hpp"
#include "mmpt/network.hpp"
#include "mmpt/tensor.hpp"

namespace mmpt {

struct LossConfig {
  double barlow_lambda = 5e-3;
  bool barlow_centered = false;  // subtract per-column means before normalizing
};

// Scalar values of every objective for one batch, reported per epoch.
struct LossReport {
  double l_a = 0.0;
  double l_x = 0.0;
  double l_l = 0.0;
  double l_bt = 0.0;
  double l_die = 0.0;
  double l_unit = 0.0;
  double l_dis = 0.0;
  double total = 0.0;
};

// Outputs of one masked forward pass needed by the objectives.
struct ViewOutputs {
  Tensor atom_logits;    // N x 119
  Tensor coord_pred;     // N x 1
  Tensor lattice_pred;   // B x 6
  Tensor projection;     // N x d_s, trunk features feeding the Barlow term
  Tensor dir_logits;     // E x 27
  Tensor unit_logits;    // E x 2
  Tensor dist_pred;      // E x 1
};

// Cross entropy on the rows of one view that its mask hid, averaged per
// crystal and then over crystals with a non-empty hidden set.
Tensor masked_atom_ce(const Tensor& logits, const BatchGraph& batch,
                      const std::vector<MutexMasks>& masks, bool penalize_m);

// Absolute coordinate error under the same per-crystal averaging.
Tensor masked_coord_mae(const Tensor& pred, const BatchGraph& batch,
                        const std::vector<MutexMasks>& masks, bool penalize_m);

Tensor loss_atom(const Tensor& logits_m, const Tensor& logits_mbar,
                 const BatchGraph& batch, const std::vector<MutexMasks>& masks);

Tensor loss_coord(const Tensor& pred_m, const Tensor& pred_mbar,
                  const BatchGraph& batch, const std::vector<MutexMasks>& masks);

// Mean squared error against the reduced cell parameters, over all 6B entries.
Tensor loss_lattice(const Tensor& pred, const BatchGraph& batch);

// Redundancy reduction between the two projections; atoms are the samples.
// Throws DegenerateEmbedding when a projection column has zero norm.
Tensor loss_barlow(const Tensor& proj_m, const Tensor& proj_mbar, const LossConfig& cfg);

// Mean cross entropy over every edge of the batch graph.
Tensor edge_ce_mean(const Tensor& logits, const std::vector<int>& labels, int num_classes);

Tensor loss_direction(const Tensor& logits_m, const Tensor& logits_mbar, const BatchGraph& batch);
Tensor loss_unit_cell(const Tensor& logits_m, const Tensor& logits_mbar, const BatchGraph& batch);
Tensor loss_distance(const Tensor& pred_m, const Tensor& pred_mbar, const BatchGraph& batch);

struct LossWeights {
  double atom = 5.0;
  double coord = 1.0;
  double lattice = 1.0;
  double barlow = 0.5;
  double direction = 1.0;
  double unit_cell = 1.0;
  double distance = 1.0;
};

struct TotalLoss {
  Tensor total;
  // Unweighted component scalars (zero constants for disabled terms), kept so
  // callers can differentiate any single objective.
  Tensor l_a, l_x, l_l, l_bt, l_die, l_unit, l_dis;
  LossReport report;
};

// Weighted sum of every term from the two mutex views.  With single_view set
// only the M view contributes and the Barlow term is dropped.
TotalLoss total_loss(const ViewOutputs& view_m, const ViewOutputs& view_mbar,
                     const BatchGraph& batch, const std::vector<MutexMasks>& masks,
                     const LossConfig& cfg, const LossWeights& weights,
                     bool single_view = false, bool use_barlow = true);

}  // namespace mmpt
