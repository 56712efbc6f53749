#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arsls/entity_sim.hpp"
#include "arsls/result.hpp"
#include "arsls/scene_model.hpp"

namespace arsls {

/// One draw command. Commands are emitted back-to-front; `z_order` is the
/// position in that order.
struct DrawCommand {
  std::string sprite_id;
  Point pos;                 // sprite centre
  double half_w = 0.0;       // extents before scaling
  double half_h = 0.0;
  double scale = 1.0;
  std::int64_t z_order = 0;
  std::optional<std::string> label;
  double opacity = 1.0;
  double depth = 0.0;        // occlusion depth (larger = farther)
  bool overlay = false;      // screen-space UI, never occluded
  int variant = 0;           // look / texture / colour index
  EntityId entity = 0;

  friend bool operator==(const DrawCommand&, const DrawCommand&) = default;
};

struct RenderList {
  std::vector<DrawCommand> commands;
  friend bool operator==(const RenderList&, const RenderList&) = default;
};

inline constexpr int kPetalCount = 48;

RenderList build_render_list(const SimState& state, const SceneConfig& cfg);

nlohmann::json render_list_json(const RenderList& list);
nlohmann::json board_view_json(const BoardView& board);

struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgba;  // row-major, 4 bytes per pixel

  Frame() = default;
  Frame(int w, int h) : width(w), height(h), rgba(static_cast<std::size_t>(w) * h * 4, 0) {}

  std::uint8_t* at(int x, int y) { return rgba.data() + (static_cast<std::size_t>(y) * width + x) * 4; }
  const std::uint8_t* at(int x, int y) const { return rgba.data() + (static_cast<std::size_t>(y) * width + x) * 4; }
  friend bool operator==(const Frame&, const Frame&) = default;
};

enum class RasterError { DimMismatch };

/// Painter's algorithm over the list with depth-masked occluders: a pixel of
/// an entity farther than an occluder covering that pixel keeps the
/// background.
Result<Frame, RasterError> rasterize(const RenderList& list, const SceneConfig& cfg, const Frame& background);

/// Sky/water placeholder used when the scene has no background image.
Frame synthesize_background(const SceneConfig& cfg);

struct PngError {
  std::string message;
};

std::string encode_frame(const Frame& frame);
Result<Frame, PngError> decode_frame(std::string_view png);

/// Loads `cfg.background_ref` relative to `base_dir`, or synthesizes one when
/// the reference is empty.
Result<Frame, PngError> load_background(const SceneConfig& cfg, const std::filesystem::path& base_dir);

}  // namespace arsls
