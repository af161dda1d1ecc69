#include "tahdg/feature_encoding.hpp"

#include <cmath>

namespace tahdg {

EncoderParams::EncoderParams(const ModelDims& dims, int num_object_classes)
    : w_o("enc.w_o", dims.d_h, dims.object_concat_dim()),
      w_v("enc.w_v", dims.d_v_proj, dims.d_v),
      w_b("enc.w_b", dims.d_b, 4),
      w_r("enc.w_r", dims.d_h, dims.relation_concat_dim()),
      embedding("enc.embed", num_object_classes, dims.d_c) {}

std::vector<ad::Param*> EncoderParams::params() {
  return {&w_o, &w_v, &w_b, &w_r, &embedding};
}

void xavier_init(ad::Param& p, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / (p.value.rows() + p.value.cols()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
      p.value(i, j) = dist(rng);
    }
  }
}

Eigen::Vector4d normalized_box(const Box& b, double img_w, double img_h) {
  return Eigen::Vector4d(b.x1 / img_w, b.y1 / img_h, b.x2 / img_w, b.y2 / img_h);
}

ad::Var encode_object_node(ad::Tape& tape, EncoderParams& p, const DetectedObject& obj,
                           double img_w, double img_h) {
  if (static_cast<Eigen::Index>(obj.visual_feature.size()) != p.w_v.value.cols()) {
    throw ConfigError("encode_object: visual feature dimension " +
                      std::to_string(obj.visual_feature.size()) + " != configured " +
                      std::to_string(p.w_v.value.cols()));
  }
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(obj.visual_feature.data(),
                                                        obj.visual_feature.size());
  ad::Var v_in = tape.input(std::move(v));
  ad::Var v_proj = tape.matvec(p.w_v, v_in);

  ad::Var b_in = tape.input(normalized_box(obj.box, img_w, img_h));
  ad::Var b_proj = tape.matvec(p.w_b, b_in);

  ad::Var c_emb;
  if (p.one_hot_classes) {
    Eigen::VectorXd onehot = Eigen::VectorXd::Zero(p.embedding.value.cols());
    if (obj.label < p.embedding.value.cols()) onehot[obj.label] = 1.0;
    c_emb = tape.input(std::move(onehot));
  } else {
    if (obj.label < 0 || obj.label >= p.embedding.value.rows()) {
      throw ConfigError("encode_object: label out of embedding range");
    }
    c_emb = tape.embed_row(p.embedding, obj.label);
  }

  ad::Var cat = tape.concat({v_proj, b_proj, c_emb});
  return tape.matvec(p.w_o, cat);
}

ad::Var encode_relation_node(ad::Tape& tape, EncoderParams& p, ad::Var f_i, ad::Var f_j,
                             const Box& b_union, double img_w, double img_h) {
  ad::Var b_in = tape.input(normalized_box(b_union, img_w, img_h));
  ad::Var b_proj = tape.matvec(p.w_b, b_in);
  ad::Var cat = tape.concat({f_i, f_j, b_proj});
  return tape.matvec(p.w_r, cat);
}

Eigen::VectorXd encode_object(const DetectedObject& obj, double img_w, double img_h,
                              EncoderParams& p) {
  ad::Tape tape;
  return tape.value(encode_object_node(tape, p, obj, img_w, img_h));
}

Eigen::VectorXd encode_relation(const Eigen::VectorXd& f_i, const Eigen::VectorXd& f_j,
                                const Box& b_union, double img_w, double img_h,
                                EncoderParams& p) {
  ad::Tape tape;
  ad::Var vi = tape.input(f_i);
  ad::Var vj = tape.input(f_j);
  return tape.value(encode_relation_node(tape, p, vi, vj, b_union, img_w, img_h));
}

}  // namespace tahdg
