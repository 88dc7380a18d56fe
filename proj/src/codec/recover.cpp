#include "uhal/codec/recover.hpp"

#include "uhal/core/error.hpp"
#include "uhal/train/metrics.hpp"

namespace uhal::codec {

models::RecoveryModel<float> model_from_container(const MetadataContainer& c,
                                                  const models::RecoveryModel<float>* encoder_source) {
  models::RecoveryModel<float> model(c.arch, 0);
  models::WeightBundle bundle = c.weights;
  if (!c.include_encoder && !model.encoding_parameters().empty()) {
    if (!encoder_source) {
      throw MetadataError(MetadataError::Kind::ArchMismatch,
                          "container holds no encoder weights and no pretrained encoder was supplied");
    }
    if (!(encoder_source->arch() == c.arch)) {
      throw MetadataError(MetadataError::Kind::ArchMismatch, "pretrained encoder arch differs from the container arch");
    }
    bundle.encoding = encoder_source->export_weights().encoding;
  }
  model.import_weights(bundle);
  return model;
}

core::Tensor<float> recover(const core::Tensor<float>& y, const MetadataContainer& c,
                            const models::RecoveryModel<float>* encoder_source, bool clamp) {
  const auto model = model_from_container(c, encoder_source);
  auto out = model.recover(y);
  return clamp ? train::clamp01(std::move(out)) : out;
}

core::Tensor<float> recover(const core::Tensor<float>& y, std::span<const std::uint8_t> container_bytes,
                            const models::RecoveryModel<float>* encoder_source, bool clamp) {
  return recover(y, deserialize_container(container_bytes), encoder_source, clamp);
}

}  // namespace uhal::codec
