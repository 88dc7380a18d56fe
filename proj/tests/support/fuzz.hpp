#pragma once

#include <cstring>

#include "uhal/codec/container.hpp"
#include "uhal/core/rng.hpp"
#include "uhal/models/recovery_model.hpp"

namespace uhal::testkit {

// Random container: varied arch, modality and encoder flag, with weights
// replaced by arbitrary 32-bit patterns (NaN and Inf payloads included).
inline codec::MetadataContainer random_container(core::RngStream& rng) {
  using models::ArchDescriptor;
  ArchDescriptor arch;
  switch (rng.below(6)) {
    case 0: {
      const std::uint32_t ks[] = {0, 32, 64, 128};
      arch = ArchDescriptor::ours(ks[rng.below(4)]);
      arch.mlp_hidden = static_cast<std::uint32_t>(8 + rng.below(60));
      arch.mlp_layers = static_cast<std::uint32_t>(1 + rng.below(3));
      if (arch.k > 0) arch.encoder_width = static_cast<std::uint32_t>(4 + rng.below(20));
      break;
    }
    case 1:
      arch = ArchDescriptor::ours_base_encoder();
      break;
    case 2:
      arch = ArchDescriptor::siren();
      break;
    case 3:
      arch = ArchDescriptor::nerf_pe();
      break;
    case 4:
      arch = ArchDescriptor::hashgrid();
      break;
    default:
      arch = ArchDescriptor::ours(64);
      break;
  }
  const codec::Modality modalities[] = {codec::Modality::NaturalSr, codec::Modality::TextSr,
                                        codec::Modality::LowLight, codec::Modality::Custom};
  const models::RecoveryModel<float> model(arch, rng.below(1u << 20));
  codec::MetadataContainer c =
      codec::make_container(model, modalities[rng.below(4)], arch.has_encoder() || arch.has_hashgrid() ? rng.below(2) == 0 : false);
  auto scramble = [&](std::vector<models::NamedTensor>& ts) {
    for (auto& t : ts) {
      for (float& v : t.value.storage()) {
        const auto bits = static_cast<std::uint32_t>(rng.below(1ull << 32));
        std::memcpy(&v, &bits, 4);
      }
    }
  };
  scramble(c.weights.encoding);
  scramble(c.weights.head);
  return c;
}

}  // namespace uhal::testkit
