#ifndef TAHDG_FEATURE_ENCODING_HPP
#define TAHDG_FEATURE_ENCODING_HPP

#include <random>

#include "tahdg/autodiff.hpp"
#include "tahdg/scene_model.hpp"

namespace tahdg {

/// Hidden-layer sizes. Defaults are desk-scale; everything is configurable.
struct ModelDims {
  int d_v = 128;       // detector visual feature
  int d_v_proj = 128;  // projected visual feature
  int d_b = 32;        // projected box
  int d_c = 64;        // class embedding
  int d_h = 256;       // hidden feature

  int object_concat_dim() const { return d_v_proj + d_b + d_c; }
  int relation_concat_dim() const { return 2 * d_h + d_b; }
};

/// Linear maps producing the initial object feature
/// f_i = W_o [W_v v_i ; W_b b_i ; embed(c_i)] and the relation feature
/// f_ij = W_r [f_i ; f_j ; W_b b_union]. Boxes are normalized to [0,1] by the
/// image size before W_b; one_hot_classes swaps the learned embedding for a
/// fixed one-hot block (exactness tests).
struct EncoderParams {
  ad::Param w_o, w_v, w_b, w_r, embedding;
  bool one_hot_classes = false;

  EncoderParams() = default;
  EncoderParams(const ModelDims& dims, int num_object_classes);

  std::vector<ad::Param*> params();
};

Eigen::Vector4d normalized_box(const Box& b, double img_w, double img_h);

ad::Var encode_object_node(ad::Tape& tape, EncoderParams& p, const DetectedObject& obj,
                           double img_w, double img_h);
ad::Var encode_relation_node(ad::Tape& tape, EncoderParams& p, ad::Var f_i, ad::Var f_j,
                             const Box& b_union, double img_w, double img_h);

Eigen::VectorXd encode_object(const DetectedObject& obj, double img_w, double img_h,
                              EncoderParams& p);
Eigen::VectorXd encode_relation(const Eigen::VectorXd& f_i, const Eigen::VectorXd& f_j,
                                const Box& b_union, double img_w, double img_h,
                                EncoderParams& p);

void xavier_init(ad::Param& p, std::mt19937_64& rng);

}  // namespace tahdg

#endif
