#include "arsls/compositor.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace arsls {

using nlohmann::json;

namespace {

constexpr double kBoardWidth = 260.0;
constexpr double kBoardMargin = 16.0;
constexpr double kLabelCharWidth = 6.0;
constexpr double kLabelHeight = 10.0;
constexpr std::size_t kLabelMaxChars = 40;

struct Rgb {
  std::uint8_t r, g, b;
};

// Placeholder palette per sprite; `variant` picks within the row.
Rgb sprite_color(std::string_view sprite, int variant) {
  static constexpr std::array<Rgb, 6> particles{{{255, 80, 80}, {255, 200, 60}, {120, 220, 255},
                                                 {180, 120, 255}, {120, 255, 140}, {255, 140, 220}}};
  static constexpr std::array<Rgb, 4> fish{{{240, 110, 40}, {250, 200, 50}, {235, 235, 235}, {200, 60, 40}}};
  static constexpr std::array<Rgb, 6> umbrellas{{{200, 40, 40}, {220, 120, 40}, {60, 120, 200},
                                                 {160, 60, 160}, {40, 150, 110}, {230, 190, 80}}};
  const auto pick = [&](const auto& row) { return row[static_cast<std::size_t>(variant) % row.size()]; };
  if (sprite == "lotus") return {245, 150, 190};
  if (sprite == "fish") return pick(fish);
  if (sprite == "firework") return {255, 240, 200};
  if (sprite == "firework_particle") return pick(particles);
  if (sprite == "umbrella") return pick(umbrellas);
  if (sprite == "ripple") return {225, 240, 255};
  if (sprite == "petal") return {255, 190, 215};
  if (sprite == "board") return {25, 25, 35};
  return {255, 0, 255};
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix64(a * 0x9E3779B97F4A7C15ull ^ b); }
double unit_hash(std::uint64_t a, std::uint64_t b) {
  return static_cast<double>(mix(a, b) >> 11) * 0x1.0p-53;
}

std::size_t utf8_length(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) {
    return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
  }));
}

std::string board_label(const BoardView& b) {
  std::ostringstream out;
  out << b.keyword_or_theme << '\n';
  for (const std::string& v : b.last_nine) out << v << '\n';
  out << "countdown " << (b.countdown_ms + 999) / 1000 << "s\n";
  out << "combo " << b.combo << '\n';
  out << "progress " << b.count << '/' << b.threshold;
  return out.str();
}

}  // namespace

RenderList build_render_list(const SimState& state, const SceneConfig& cfg) {
  const TuningConstants& t = cfg.tuning;
  const double now = state.now_exact_ms();
  std::vector<DrawCommand> world;

  for (const Ripple& r : state.ripples) {
    const double age = std::clamp((now - r.born_at_ms) / static_cast<double>(t.ripple_lifetime_ms), 0.0, 1.0);
    DrawCommand c;
    c.sprite_id = "ripple";
    c.pos = r.center;
    c.half_w = 4.0 + 20.0 * age;
    c.half_h = c.half_w * 0.35;
    c.opacity = 1.0 - age;
    c.depth = depth_of(cfg, r.center);
    c.entity = r.id;
    world.push_back(c);
  }
  for (const Lotus& l : state.lotuses) {
    DrawCommand c;
    c.sprite_id = "lotus";
    c.pos = l.pos;
    c.half_w = t.lotus_half_width_px;
    c.half_h = t.lotus_half_height_px;
    c.label = l.owner_name;
    c.depth = depth_of(cfg, l.pos);
    c.entity = l.id;
    world.push_back(c);
  }
  for (const Fish& f : state.fishes) {
    DrawCommand c;
    c.sprite_id = "fish";
    c.pos = fish_position(f, t, now);
    c.half_w = 14.0;
    c.half_h = 7.0;
    c.label = f.owner_name;
    c.depth = depth_of(cfg, f.food_pos);
    c.variant = f.look_id;
    c.entity = f.id;
    world.push_back(c);
  }
  for (const Firework& fw : state.fireworks) {
    const double depth = depth_of(cfg, fw.spawn);
    if (fw.phase == FireworkPhase::Ascending) {
      DrawCommand c;
      c.sprite_id = "firework";
      c.pos = firework_position(fw, t, now);
      c.half_w = c.half_h = 3.0;
      c.label = fw.tipper_name;
      c.depth = depth;
      c.entity = fw.id;
      world.push_back(c);
      continue;
    }
    const double age_s = std::max(0.0, now - fw.exploded_at_ms) / 1000.0;
    const double fade = 1.0 - std::clamp((now - fw.exploded_at_ms) / static_cast<double>(t.firework_burst_ms), 0.0, 1.0);
    for (const Particle& p : fw.particles) {
      DrawCommand c;
      c.sprite_id = "firework_particle";
      c.pos = {fw.apex.x + std::cos(p.angle) * p.speed * age_s,
               fw.apex.y + std::sin(p.angle) * p.speed * age_s + 30.0 * age_s * age_s};
      c.half_w = c.half_h = 2.0;
      c.opacity = fade;
      c.depth = depth;
      c.variant = p.color;
      c.entity = fw.id;
      world.push_back(c);
    }
    DrawCommand name;
    name.sprite_id = "firework_name";
    name.pos = fw.apex;
    name.label = fw.tipper_name;
    name.opacity = fade;
    name.depth = depth;
    name.entity = fw.id;
    world.push_back(name);
  }
  for (const Umbrella& u : state.umbrellas) {
    DrawCommand c;
    c.sprite_id = "umbrella";
    c.pos = u.pos;
    c.half_w = t.umbrella_half_width_px;
    c.half_h = t.umbrella_half_height_px;
    c.label = u.owner_name + ": " + u.story;
    c.depth = depth_of(cfg, Point{0.0, cfg.screen.height_px - t.umbrella_half_height_px});
    c.variant = u.texture_id;
    c.entity = u.id;
    world.push_back(c);
  }
  // stable_sort keeps emission order for commands of the same entity.
  std::stable_sort(world.begin(), world.end(), [](const DrawCommand& a, const DrawCommand& b) {
    return draws_before(a.depth, a.entity, b.depth, b.entity);
  });

  RenderList list;
  DrawCommand background;
  background.sprite_id = "background";
  background.pos = {cfg.screen.width_px / 2.0, cfg.screen.height_px / 2.0};
  background.half_w = cfg.screen.width_px / 2.0;
  background.half_h = cfg.screen.height_px / 2.0;
  background.depth = std::numeric_limits<double>::infinity();
  list.commands.push_back(background);
  for (DrawCommand& c : world) list.commands.push_back(std::move(c));

  if (state.petal_field) {
    const double sky = cfg.screen.height_px * 0.6;
    const double secs = now / 1000.0;
    for (int i = 0; i < kPetalCount; ++i) {
      const auto k = static_cast<std::uint64_t>(i);
      DrawCommand c;
      c.sprite_id = "petal";
      c.pos = {std::fmod(unit_hash(k, 1) * cfg.screen.width_px + (20.0 + 30.0 * unit_hash(k, 2)) * secs,
                         static_cast<double>(cfg.screen.width_px)),
               std::fmod(unit_hash(k, 3) * sky + (10.0 + 15.0 * unit_hash(k, 4)) * secs, sky)};
      c.half_w = 3.0;
      c.half_h = 2.0;
      c.overlay = true;
      c.opacity = 0.85;
      c.variant = i;
      list.commands.push_back(c);
    }
  }

  if (state.verse.running()) {
    const BoardView b = *state.verse.board_view(state.now_ms());
    DrawCommand c;
    c.sprite_id = "board";
    c.half_w = kBoardWidth / 2.0;
    c.half_h = cfg.screen.height_px * 0.3;
    c.pos = {kBoardMargin + c.half_w, kBoardMargin + c.half_h};
    c.label = board_label(b);
    c.overlay = true;
    c.opacity = 0.7;
    list.commands.push_back(c);
  }
  for (std::size_t i = 0; i < list.commands.size(); ++i) list.commands[i].z_order = static_cast<std::int64_t>(i);
  return list;
}

json render_list_json(const RenderList& list) {
  json out = json::array();
  for (const DrawCommand& c : list.commands) {
    json j = {{"sprite_id", c.sprite_id}, {"pos", {c.pos.x, c.pos.y}}, {"size", {c.half_w * 2, c.half_h * 2}},
              {"scale", c.scale}, {"z_order", c.z_order}, {"opacity", c.opacity}, {"variant", c.variant}};
    if (c.entity != 0) j["entity"] = c.entity;
    if (c.label) j["label"] = *c.label;
    if (c.overlay) j["overlay"] = true;
    out.push_back(std::move(j));
  }
  return out;
}

json board_view_json(const BoardView& b) {
  return {{"keyword_or_theme", b.keyword_or_theme}, {"last_nine", b.last_nine}, {"countdown_ms", b.countdown_ms},
          {"combo", b.combo}, {"progress", {b.count, b.threshold}}, {"status", to_string(b.status)}};
}

// ---------------------------------------------------------------------------

namespace {

class Painter {
 public:
  Painter(Frame& frame, const std::vector<double>& occlusion) : frame_(frame), occlusion_(occlusion) {}

  void blend(int x, int y, Rgb c, double alpha, const DrawCommand& cmd) {
    if (x < 0 || y < 0 || x >= frame_.width || y >= frame_.height) return;
    if (!cmd.overlay && cmd.depth > occlusion_[static_cast<std::size_t>(y) * frame_.width + x]) return;
    const int a = static_cast<int>(std::lround(std::clamp(alpha, 0.0, 1.0) * 255.0));
    if (a == 0) return;
    std::uint8_t* px = frame_.at(x, y);
    const auto mixc = [a](std::uint8_t dst, std::uint8_t src) {
      return static_cast<std::uint8_t>((src * a + dst * (255 - a) + 127) / 255);
    };
    px[0] = mixc(px[0], c.r);
    px[1] = mixc(px[1], c.g);
    px[2] = mixc(px[2], c.b);
    px[3] = 255;
  }

  template <typename Inside>
  void fill(double min_x, double min_y, double max_x, double max_y, Rgb c, double alpha, const DrawCommand& cmd,
            Inside inside) {
    const int x0 = std::max(0, static_cast<int>(std::floor(min_x)));
    const int y0 = std::max(0, static_cast<int>(std::floor(min_y)));
    const int x1 = std::min(frame_.width - 1, static_cast<int>(std::ceil(max_x)));
    const int y1 = std::min(frame_.height - 1, static_cast<int>(std::ceil(max_y)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (inside(x + 0.5, y + 0.5)) blend(x, y, c, alpha, cmd);
      }
    }
  }

  void ellipse(Point centre, double rx, double ry, Rgb c, double alpha, const DrawCommand& cmd) {
    if (rx <= 0 || ry <= 0) return;
    fill(centre.x - rx, centre.y - ry, centre.x + rx, centre.y + ry, c, alpha, cmd, [&](double x, double y) {
      const double dx = (x - centre.x) / rx;
      const double dy = (y - centre.y) / ry;
      return dx * dx + dy * dy <= 1.0;
    });
  }

  void ring(Point centre, double rx, double ry, double thickness, Rgb c, double alpha, const DrawCommand& cmd) {
    const double irx = std::max(0.0, rx - thickness);
    const double iry = std::max(0.0, ry - thickness);
    fill(centre.x - rx, centre.y - ry, centre.x + rx, centre.y + ry, c, alpha, cmd, [&](double x, double y) {
      const double dx = (x - centre.x) / rx;
      const double dy = (y - centre.y) / ry;
      if (dx * dx + dy * dy > 1.0) return false;
      if (irx == 0 || iry == 0) return true;
      const double ix = (x - centre.x) / irx;
      const double iy = (y - centre.y) / iry;
      return ix * ix + iy * iy > 1.0;
    });
  }

  void rect(double min_x, double min_y, double max_x, double max_y, Rgb c, double alpha, const DrawCommand& cmd) {
    fill(min_x, min_y, max_x, max_y, c, alpha, cmd,
         [&](double x, double y) { return x >= min_x && x < max_x && y >= min_y && y < max_y; });
  }

  // Opaque box with one dark block per glyph; real text is drawn by the client.
  void label(Point anchor, std::string_view text, double alpha, const DrawCommand& cmd) {
    std::size_t longest = 0;
    std::size_t lines = 1;
    std::size_t current = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= text.size(); ++i) {
      if (i == text.size() || text[i] == '\n') {
        current = utf8_length(text.substr(start, i - start));
        longest = std::max(longest, std::min(current, kLabelMaxChars));
        start = i + 1;
        if (i < text.size()) ++lines;
      }
    }
    const double w = longest * kLabelCharWidth + 4.0;
    const double h = lines * kLabelHeight + 2.0;
    const double left = anchor.x - w / 2.0;
    const double top = anchor.y - h;
    rect(left, top, left + w, top + h, {250, 250, 250}, alpha * 0.9, cmd);
    std::size_t line = 0;
    std::size_t col = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
      const auto byte = static_cast<unsigned char>(text[i]);
      if (text[i] == '\n') {
        ++line;
        col = 0;
        continue;
      }
      if ((byte & 0xC0) == 0x80) continue;
      if (col < kLabelMaxChars && byte != ' ') {
        const double gx = left + 2.0 + col * kLabelCharWidth;
        const double gy = top + 2.0 + line * kLabelHeight;
        rect(gx, gy + (byte % 3), gx + 4.0, gy + 7.0, {40, 40, 40}, alpha, cmd);
      }
      ++col;
    }
  }

 private:
  Frame& frame_;
  const std::vector<double>& occlusion_;
};

}  // namespace

Result<Frame, RasterError> rasterize(const RenderList& list, const SceneConfig& cfg, const Frame& background) {
  if (background.width != cfg.screen.width_px || background.height != cfg.screen.height_px ||
      background.rgba.size() != static_cast<std::size_t>(background.width) * background.height * 4) {
    return RasterError::DimMismatch;
  }
  Frame frame = background;

  // Nearest occluder depth covering each pixel centre.
  std::vector<double> occlusion(static_cast<std::size_t>(frame.width) * frame.height,
                                std::numeric_limits<double>::infinity());
  for (const Occluder& o : cfg.occluders) {
    const Box box = bounding_box(o.polygon);
    const int x0 = std::max(0, static_cast<int>(std::floor(box.min_x)));
    const int y0 = std::max(0, static_cast<int>(std::floor(box.min_y)));
    const int x1 = std::min(frame.width - 1, static_cast<int>(std::ceil(box.max_x)));
    const int y1 = std::min(frame.height - 1, static_cast<int>(std::ceil(box.max_y)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (point_in_polygon(o.polygon, {x + 0.5, y + 0.5})) {
          double& d = occlusion[static_cast<std::size_t>(y) * frame.width + x];
          d = std::min(d, o.depth);
        }
      }
    }
  }

  Painter paint(frame, occlusion);
  for (const DrawCommand& c : list.commands) {
    if (c.sprite_id == "background") continue;
    const Rgb color = sprite_color(c.sprite_id, c.variant);
    const double rx = c.half_w * c.scale;
    const double ry = c.half_h * c.scale;
    if (c.sprite_id == "ripple") {
      paint.ring(c.pos, rx, ry, 1.5, color, c.opacity, c);
    } else if (c.sprite_id == "board") {
      paint.rect(c.pos.x - rx, c.pos.y - ry, c.pos.x + rx, c.pos.y + ry, color, c.opacity, c);
    } else if (c.sprite_id == "umbrella") {
      // Canopy plus handle.
      paint.ellipse({c.pos.x, c.pos.y}, rx, ry * 0.55, color, c.opacity, c);
      paint.rect(c.pos.x - 1.0, c.pos.y, c.pos.x + 1.0, c.pos.y + ry, {90, 60, 30}, c.opacity, c);
    } else if (c.sprite_id != "firework_name") {
      paint.ellipse(c.pos, rx, ry, color, c.opacity, c);
    }
    if (c.label) {
      if (c.sprite_id == "board") {
        paint.label({c.pos.x, c.pos.y + ry - 4.0}, *c.label, c.opacity, c);
      } else {
        paint.label({c.pos.x, c.pos.y - ry - 4.0}, *c.label, c.opacity, c);
      }
    }
  }
  return frame;
}

Frame synthesize_background(const SceneConfig& cfg) {
  Frame frame(cfg.screen.width_px, cfg.screen.height_px);
  for (int y = 0; y < frame.height; ++y) {
    const double v = static_cast<double>(y) / std::max(1, frame.height - 1);
    for (int x = 0; x < frame.width; ++x) {
      std::uint8_t* px = frame.at(x, y);
      if (point_in_water(cfg, {x + 0.5, y + 0.5})) {
        px[0] = static_cast<std::uint8_t>(40 + 30 * v);
        px[1] = static_cast<std::uint8_t>(90 + 40 * v);
        px[2] = static_cast<std::uint8_t>(110 + 30 * v);
      } else {
        px[0] = static_cast<std::uint8_t>(150 + 60 * v);
        px[1] = static_cast<std::uint8_t>(180 + 40 * v);
        px[2] = static_cast<std::uint8_t>(220 - 20 * v);
      }
      px[3] = 255;
    }
  }
  for (const Occluder& o : cfg.occluders) {
    const Box box = bounding_box(o.polygon);
    for (int y = std::max(0, static_cast<int>(box.min_y)); y < std::min(frame.height, static_cast<int>(box.max_y) + 1); ++y) {
      for (int x = std::max(0, static_cast<int>(box.min_x)); x < std::min(frame.width, static_cast<int>(box.max_x) + 1); ++x) {
        if (point_in_polygon(o.polygon, {x + 0.5, y + 0.5})) {
          std::uint8_t* px = frame.at(x, y);
          px[0] = 70;
          px[1] = 60;
          px[2] = 50;
        }
      }
    }
  }
  return frame;
}

// ---------------------------------------------------------------------------

namespace {

void png_append(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), len);
}

void png_flush_noop(png_structp) {}

struct ReadCursor {
  std::string_view data;
  std::size_t pos = 0;
};

void png_consume(png_structp png, png_bytep out, png_size_t len) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + len > cur->data.size()) png_error(png, "truncated PNG");
  std::copy_n(cur->data.data() + cur->pos, len, reinterpret_cast<char*>(out));
  cur->pos += len;
}

}  // namespace

std::string encode_frame(const Frame& frame) {
  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return {};
  }
  png_set_write_fn(png, &out, png_append, png_flush_noop);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(frame.width), static_cast<png_uint_32>(frame.height), 8,
               PNG_COLOR_TYPE_RGBA, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < frame.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(frame.at(0, y)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Result<Frame, PngError> decode_frame(std::string_view bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    return PngError{"not a PNG"};
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  ReadCursor cursor{bytes};
  Frame frame;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return PngError{"corrupt PNG"};
  }
  png_set_read_fn(png, &cursor, png_consume);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (!(color & PNG_COLOR_MASK_ALPHA)) png_set_add_alpha(png, 0xFF, PNG_FILLER_AFTER);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  frame = Frame(static_cast<int>(png_get_image_width(png, info)), static_cast<int>(png_get_image_height(png, info)));
  std::vector<png_bytep> rows(static_cast<std::size_t>(frame.height));
  for (int y = 0; y < frame.height; ++y) rows[static_cast<std::size_t>(y)] = frame.at(0, y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return frame;
}

Result<Frame, PngError> load_background(const SceneConfig& cfg, const std::filesystem::path& base_dir) {
  if (cfg.background_ref.empty()) return synthesize_background(cfg);
  const std::filesystem::path path = base_dir / cfg.background_ref;
  std::ifstream in(path, std::ios::binary);
  if (!in) return PngError{"cannot open background " + path.string()};
  std::ostringstream bytes;
  bytes << in.rdbuf();
  auto frame = decode_frame(bytes.str());
  if (!frame) return PngError{path.string() + ": " + frame.error().message};
  if (frame->width != cfg.screen.width_px || frame->height != cfg.screen.height_px) {
    return PngError{path.string() + ": background size does not match the scene screen"};
  }
  return frame;
}

}  // namespace arsls
