#pragma once

#include "jnirm/types.hpp"

namespace jnirm {

/// delta + U V^T. The diagonal is filled but carries no data.
MatrixXd expected_network(double delta, const MatrixXd& U, const MatrixXd& V);

/// 1 Beta^T + Theta A^T, persons in rows.
MatrixXd expected_responses(const VectorXd& Beta, const MatrixXd& A, const MatrixXd& Theta);

/// Blocks of the joint latent covariance. Layout of the stacked person vector
/// is (u_1..u_K, v_1..v_K, theta_1..theta_D).
struct CovarianceBlocks {
  MatrixXd network;  // 2K x 2K
  MatrixXd items;    // D x D
  MatrixXd cross;    // D x 2K
};

CovarianceBlocks covariance_blocks(const MatrixXd& Sigma_utheta, int K, int D);
MatrixXd assemble_covariance(const CovarianceBlocks& blocks);

/// Slot of sender dimension k, receiver dimension k and item dimension d.
inline int sender_slot(int k) { return k; }
inline int receiver_slot(int K, int k) { return K + k; }
inline int theta_slot(int K, int d) { return 2 * K + d; }

/// N x (2K+D) matrix with rows (u_p, v_p, theta_p); absent blocks are skipped.
MatrixXd stack_latents(const MatrixXd& U, const MatrixXd& V, const MatrixXd& Theta);

}  // namespace jnirm
