#include "semloc/model_io.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "semloc/errors.h"

namespace semloc {

const char* to_string(Condition condition) {
  return condition == Condition::kDay ? "day" : "night";
}

std::optional<Condition> parse_condition(const std::string& text) {
  if (text == "day") return Condition::kDay;
  if (text == "night") return Condition::kNight;
  return std::nullopt;
}

std::string format_double(double value) {
  std::array<char, 64> buf;
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), end);
}

namespace {

// Whitespace tokenizer over one text line with typed, exact conversions.
class LineReader {
 public:
  LineReader(std::string file, int line_no, const std::string& line)
      : file_(std::move(file)), line_no_(line_no) {
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) {
      tokens_.push_back(tok);
    }
  }

  std::size_t remaining() const { return tokens_.size() - pos_; }

  std::string next_string(const char* what) {
    if (pos_ >= tokens_.size()) {
      fail(std::string("missing ") + what);
    }
    return tokens_[pos_++];
  }

  double next_double(const char* what) {
    const std::string tok = next_string(what);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(value)) {
      fail(std::string("invalid ") + what + " '" + tok + "'");
    }
    return value;
  }

  template <typename T>
  T next_int(const char* what) {
    const std::string tok = next_string(what);
    T value{};
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      fail(std::string("invalid ") + what + " '" + tok + "'");
    }
    return value;
  }

  void expect_end() {
    if (remaining() != 0) {
      fail("unexpected trailing tokens");
    }
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(file_, line_no_, msg); }

 private:
  std::string file_;
  int line_no_;
  std::vector<std::string> tokens_;
  std::size_t pos_ = 0;
};

std::ifstream open_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError(path.string(), "cannot open file");
  }
  return in;
}

std::ofstream create_file(const std::filesystem::path& path, bool binary = false) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  return out;
}

bool is_skippable(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == '#';
}

// Calls fn(line_no, line) for each non-empty, non-comment line.
template <typename Fn>
void for_each_data_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in = open_text(path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_skippable(line)) {
      continue;
    }
    fn(line_no, line);
  }
}

std::map<CameraId, CameraIntrinsics> read_cameras(const std::filesystem::path& path) {
  std::map<CameraId, CameraIntrinsics> cameras;
  const std::string file = path.string();
  for_each_data_line(path, [&](int line_no, const std::string& line) {
    LineReader r(file, line_no, line);
    const auto id = r.next_int<CameraId>("camera id");
    const std::string model = r.next_string("camera model");
    if (model != "PINHOLE") {
      r.fail("unsupported camera model '" + model + "' (only PINHOLE)");
    }
    CameraIntrinsics cam;
    cam.width = r.next_int<int>("width");
    cam.height = r.next_int<int>("height");
    cam.fx = r.next_double("fx");
    cam.fy = r.next_double("fy");
    cam.cx = r.next_double("cx");
    cam.cy = r.next_double("cy");
    r.expect_end();
    try {
      cam.validate();
    } catch (const ConsistencyError& e) {
      r.fail(e.what());
    }
    if (!cameras.emplace(id, cam).second) {
      r.fail("duplicate camera id " + std::to_string(id));
    }
  });
  return cameras;
}

std::map<ImageId, DbImageRecord> read_images(const std::filesystem::path& path) {
  std::map<ImageId, DbImageRecord> images;
  const std::string file = path.string();
  std::ifstream in = open_text(path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_skippable(line)) {
      continue;
    }
    LineReader r(file, line_no, line);
    DbImageRecord image;
    image.id = r.next_int<ImageId>("image id");
    const double qw = r.next_double("qw");
    const double qx = r.next_double("qx");
    const double qy = r.next_double("qy");
    const double qz = r.next_double("qz");
    image.qvec = Eigen::Quaterniond(qw, qx, qy, qz);
    if (image.qvec.norm() < 1e-12) {
      r.fail("zero quaternion");
    }
    image.tvec.x() = r.next_double("tx");
    image.tvec.y() = r.next_double("ty");
    image.tvec.z() = r.next_double("tz");
    image.camera_id = r.next_int<CameraId>("camera id");
    image.name = r.next_string("image name");
    r.expect_end();

    // The observation line always follows directly, possibly empty.
    std::string obs_line;
    if (!std::getline(in, obs_line)) {
      obs_line.clear();
    }
    ++line_no;
    LineReader obs(file, line_no, obs_line);
    if (obs.remaining() % 3 != 0) {
      obs.fail("observation line must hold (x, y, point3d_id) triples");
    }
    while (obs.remaining() > 0) {
      const double x = obs.next_double("keypoint x");
      const double y = obs.next_double("keypoint y");
      const auto pid = obs.next_int<std::int64_t>("point3d id");
      if (pid < -1) {
        obs.fail("negative point3d id");
      }
      image.keypoints.emplace_back(x, y);
      image.point3d_ids.push_back(pid == -1 ? kNoPoint : static_cast<PointId>(pid));
    }
    const ImageId id = image.id;
    if (!images.emplace(id, std::move(image)).second) {
      r.fail("duplicate image id " + std::to_string(id));
    }
  }
  return images;
}

std::map<PointId, RawPoint3D> read_points(const std::filesystem::path& path) {
  std::map<PointId, RawPoint3D> points;
  const std::string file = path.string();
  for_each_data_line(path, [&](int line_no, const std::string& line) {
    LineReader r(file, line_no, line);
    const auto id = r.next_int<PointId>("point3d id");
    if (id == kNoPoint) {
      r.fail("reserved point3d id");
    }
    RawPoint3D point;
    point.position.x() = r.next_double("x");
    point.position.y() = r.next_double("y");
    point.position.z() = r.next_double("z");
    for (int c = 0; c < 3; ++c) {
      const int rgb = r.next_int<int>("color");
      if (rgb < 0 || rgb > 255) {
        r.fail("color out of range");
      }
    }
    r.next_double("error");
    if (r.remaining() % 2 != 0) {
      r.fail("track must hold (image id, point2d index) pairs");
    }
    while (r.remaining() > 0) {
      TrackElement el;
      el.image_id = r.next_int<ImageId>("track image id");
      el.point2d_idx = r.next_int<std::uint32_t>("track point2d index");
      point.track.push_back(el);
    }
    if (!points.emplace(id, std::move(point)).second) {
      r.fail("duplicate point3d id " + std::to_string(id));
    }
  });
  return points;
}

}  // namespace

bool DbImageRecord::operator==(const DbImageRecord& other) const {
  return id == other.id && name == other.name && camera_id == other.camera_id &&
         qvec.coeffs() == other.qvec.coeffs() && tvec == other.tvec &&
         keypoints == other.keypoints && point3d_ids == other.point3d_ids &&
         condition == other.condition;
}

void SfmModel::check_consistency() const {
  for (const auto& [id, image] : images) {
    const auto cam = cameras.find(image.camera_id);
    if (cam == cameras.end()) {
      throw ConsistencyError("image " + std::to_string(id) + " references missing camera " +
                             std::to_string(image.camera_id));
    }
    if (image.keypoints.size() != image.point3d_ids.size()) {
      throw ConsistencyError("image " + std::to_string(id) + ": keypoint/point id size mismatch");
    }
    for (std::size_t k = 0; k < image.keypoints.size(); ++k) {
      if (!cam->second.contains(image.keypoints[k])) {
        throw ConsistencyError("image " + std::to_string(id) + ": keypoint " + std::to_string(k) +
                               " outside the image");
      }
      const PointId pid = image.point3d_ids[k];
      if (pid == kNoPoint) {
        continue;
      }
      const auto pt = points.find(pid);
      if (pt == points.end()) {
        throw ConsistencyError("image " + std::to_string(id) + ": keypoint " + std::to_string(k) +
                               " references missing point " + std::to_string(pid));
      }
      const auto& track = pt->second.track;
      const TrackElement back{id, static_cast<std::uint32_t>(k)};
      if (std::find(track.begin(), track.end(), back) == track.end()) {
        throw ConsistencyError("point " + std::to_string(pid) + " does not track image " +
                               std::to_string(id) + " keypoint " + std::to_string(k));
      }
    }
  }
  for (const auto& [pid, point] : points) {
    if (point.track.size() < 2) {
      throw ConsistencyError("point " + std::to_string(pid) + " has a track shorter than 2");
    }
    for (const TrackElement& el : point.track) {
      const auto img = images.find(el.image_id);
      if (img == images.end()) {
        throw ConsistencyError("point " + std::to_string(pid) + " references missing image " +
                               std::to_string(el.image_id));
      }
      if (el.point2d_idx >= img->second.point3d_ids.size() ||
          img->second.point3d_ids[el.point2d_idx] != pid) {
        throw ConsistencyError("point " + std::to_string(pid) + ": track entry (" +
                               std::to_string(el.image_id) + ", " +
                               std::to_string(el.point2d_idx) + ") does not link back");
      }
    }
  }
}

const DbImageRecord* SfmModel::find_image(const std::string& name) const {
  for (const auto& [id, image] : images) {
    if (image.name == name) {
      return &image;
    }
  }
  return nullptr;
}

SfmModel load_sfm_model(const std::filesystem::path& model_dir) {
  SfmModel model;
  model.cameras = read_cameras(model_dir / "cameras.txt");
  model.images = read_images(model_dir / "images.txt");
  model.points = read_points(model_dir / "points3D.txt");
  model.check_consistency();
  return model;
}

void write_sfm_model(const SfmModel& model, const std::filesystem::path& model_dir) {
  std::filesystem::create_directories(model_dir);
  {
    std::ofstream out = create_file(model_dir / "cameras.txt");
    out << "# Camera list with one line of data per camera:\n"
        << "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n"
        << "# Number of cameras: " << model.cameras.size() << "\n";
    for (const auto& [id, cam] : model.cameras) {
      out << id << " PINHOLE " << cam.width << ' ' << cam.height << ' ' << format_double(cam.fx)
          << ' ' << format_double(cam.fy) << ' ' << format_double(cam.cx) << ' '
          << format_double(cam.cy) << '\n';
    }
  }
  {
    std::ofstream out = create_file(model_dir / "images.txt");
    out << "# Image list with two lines of data per image:\n"
        << "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
        << "#   POINTS2D[] as (X, Y, POINT3D_ID)\n"
        << "# Number of images: " << model.images.size() << "\n";
    for (const auto& [id, image] : model.images) {
      out << id << ' ' << format_double(image.qvec.w()) << ' ' << format_double(image.qvec.x())
          << ' ' << format_double(image.qvec.y()) << ' ' << format_double(image.qvec.z()) << ' '
          << format_double(image.tvec.x()) << ' ' << format_double(image.tvec.y()) << ' '
          << format_double(image.tvec.z()) << ' ' << image.camera_id << ' ' << image.name << '\n';
      for (std::size_t k = 0; k < image.keypoints.size(); ++k) {
        if (k > 0) out << ' ';
        out << format_double(image.keypoints[k].x()) << ' ' << format_double(image.keypoints[k].y())
            << ' ';
        if (image.point3d_ids[k] == kNoPoint) {
          out << -1;
        } else {
          out << image.point3d_ids[k];
        }
      }
      out << '\n';
    }
  }
  {
    std::ofstream out = create_file(model_dir / "points3D.txt");
    out << "# 3D point list with one line of data per point:\n"
        << "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n"
        << "# Number of points: " << model.points.size() << "\n";
    for (const auto& [id, point] : model.points) {
      out << id << ' ' << format_double(point.position.x()) << ' '
          << format_double(point.position.y()) << ' ' << format_double(point.position.z())
          << " 128 128 128 0";
      for (const TrackElement& el : point.track) {
        out << ' ' << el.image_id << ' ' << el.point2d_idx;
      }
      out << '\n';
    }
  }
}

ClassTable ClassTable::cityscapes() {
  ClassTable table;
  const std::pair<const char*, bool> classes[] = {
      {"road", false},        {"sidewalk", false},   {"building", false}, {"wall", false},
      {"fence", false},       {"pole", false},       {"traffic_light", false},
      {"traffic_sign", false}, {"vegetation", false}, {"terrain", false}, {"sky", false},
      {"person", true},       {"rider", true},       {"car", true},       {"truck", true},
      {"bus", true},          {"train", true},       {"motorcycle", true}, {"bicycle", true},
  };
  for (const auto& [name, dyn] : classes) {
    table.names.emplace_back(name);
    table.dynamic.push_back(dyn);
  }
  return table;
}

ClassTable load_class_table(const std::filesystem::path& path) {
  ClassTable table;
  const std::string file = path.string();
  for_each_data_line(path, [&](int line_no, const std::string& line) {
    LineReader r(file, line_no, line);
    const auto id = r.next_int<int>("class id");
    const std::string name = r.next_string("class name");
    const auto dyn = r.next_int<int>("dynamic flag");
    r.expect_end();
    if (id != static_cast<int>(table.names.size())) {
      r.fail("class ids must be contiguous from 0");
    }
    if (id >= ClassTable::kVoidId) {
      r.fail("class id collides with the void id 255");
    }
    if (dyn != 0 && dyn != 1) {
      r.fail("dynamic flag must be 0 or 1");
    }
    table.names.push_back(name);
    table.dynamic.push_back(dyn == 1);
  });
  return table;
}

void write_class_table(const ClassTable& table, const std::filesystem::path& path) {
  std::ofstream out = create_file(path);
  out << "# <id> <name> <dynamic:0|1>; void id is 255\n";
  for (std::size_t i = 0; i < table.names.size(); ++i) {
    out << i << ' ' << table.names[i] << ' ' << (table.dynamic[i] ? 1 : 0) << '\n';
  }
}

std::optional<std::uint8_t> LabelRaster::nearest(const Eigen::Vector2d& px) const {
  const double fx = std::floor(px.x() + 0.5);
  const double fy = std::floor(px.y() + 0.5);
  if (!(fx >= 0.0 && fy >= 0.0 && fx < width && fy < height)) {
    return std::nullopt;
  }
  return at(static_cast<int>(fx), static_cast<int>(fy));
}

std::map<std::uint8_t, std::size_t> LabelRaster::histogram() const {
  std::map<std::uint8_t, std::size_t> hist;
  for (const std::uint8_t v : labels) {
    ++hist[v];
  }
  return hist;
}

namespace {

struct PgmHeader {
  int width = 0;
  int height = 0;
  std::streamoff data_offset = 0;
};

PgmHeader read_pgm_header(std::istream& in, const std::string& file) {
  auto next_token = [&]() {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
      if (c == '#') {
        while (c != EOF && c != '\n') c = in.get();
      } else if (std::isspace(c)) {
        if (!tok.empty()) break;
      } else {
        tok.push_back(static_cast<char>(c));
      }
      c = in.get();
    }
    return tok;
  };
  if (next_token() != "P5") {
    throw ParseError(file, "not a binary PGM (P5)");
  }
  PgmHeader h;
  try {
    h.width = std::stoi(next_token());
    h.height = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (maxval != 255) {
      throw ParseError(file, "PGM maxval must be 255");
    }
  } catch (const std::logic_error&) {
    throw ParseError(file, "malformed PGM header");
  }
  if (h.width <= 0 || h.height <= 0) {
    throw ParseError(file, "PGM dimensions must be positive");
  }
  h.data_offset = in.tellg();
  return h;
}

}  // namespace

std::pair<int, int> read_label_raster_dims(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError(path.string(), "cannot open file");
  }
  const PgmHeader h = read_pgm_header(in, path.string());
  return {h.width, h.height};
}

LabelRaster load_label_raster(const std::filesystem::path& path, int expected_width,
                              int expected_height, const ClassTable& classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError(path.string(), "cannot open file");
  }
  const PgmHeader h = read_pgm_header(in, path.string());
  if (h.width != expected_width || h.height != expected_height) {
    throw DimensionMismatch(path.string() + ": raster is " + std::to_string(h.width) + "x" +
                            std::to_string(h.height) + ", image is " +
                            std::to_string(expected_width) + "x" + std::to_string(expected_height));
  }
  LabelRaster raster(h.width, h.height, 0);
  in.read(reinterpret_cast<char*>(raster.labels.data()),
          static_cast<std::streamsize>(raster.labels.size()));
  if (in.gcount() != static_cast<std::streamsize>(raster.labels.size())) {
    throw TruncatedFile(path.string() + ": PGM pixel data is truncated");
  }
  for (const std::uint8_t v : raster.labels) {
    if (!classes.is_valid_label(v)) {
      throw UnknownLabel(path.string() + ": label id " + std::to_string(v) +
                         " is not in the class table");
    }
  }
  return raster;
}

void write_label_raster(const LabelRaster& raster, const std::filesystem::path& path) {
  std::ofstream out = create_file(path, true);
  out << "P5\n" << raster.width << ' ' << raster.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(raster.labels.data()),
            static_cast<std::streamsize>(raster.labels.size()));
}

void GlobalDescriptor::normalize() {
  double sq = 0.0;
  for (const float v : values) {
    sq += static_cast<double>(v) * v;
  }
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw std::invalid_argument("cannot normalize a zero or non-finite global descriptor");
  }
  // Already unit up to float rounding: leave the stored values untouched so
  // that write/load round trips are exact.
  if (std::abs(norm - 1.0) <= 1e-6) {
    return;
  }
  for (float& v : values) {
    v = static_cast<float>(v / norm);
  }
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t decode_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError(path.string(), "cannot open file");
  }
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

// Checks magic and header, returns the header and the payload offset.
BinaryHeader parse_header(const std::vector<unsigned char>& bytes, const std::string& file,
                          const char magic[4], std::size_t* payload_offset) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0) {
    throw BadMagic(file + ": expected magic '" + std::string(magic, 4) + "'");
  }
  BinaryHeader h;
  const bool has_count = std::memcmp(magic, "GDSC", 4) != 0;
  const bool has_dim = std::memcmp(magic, "KPTS", 4) != 0;
  std::size_t offset = 4;
  auto take = [&]() {
    if (bytes.size() < offset + 4) {
      throw TruncatedFile(file + ": header is truncated");
    }
    const std::uint32_t v = decode_u32(bytes.data() + offset);
    offset += 4;
    return v;
  };
  h.count = has_count ? take() : 1;
  h.dim = has_dim ? take() : 2;
  if (h.dim == 0) {
    throw ParseError(file, "dimension must be positive");
  }
  *payload_offset = offset;
  return h;
}

std::vector<float> read_payload(const std::vector<unsigned char>& bytes, const std::string& file,
                                std::size_t offset, std::size_t n_floats) {
  const std::size_t need = offset + 4 * n_floats;
  if (bytes.size() < need) {
    throw TruncatedFile(file + ": expected " + std::to_string(n_floats) + " floats, found " +
                        std::to_string((bytes.size() - offset) / 4));
  }
  if (bytes.size() > need) {
    throw ParseError(file, "trailing bytes after payload");
  }
  std::vector<float> values(n_floats);
  for (std::size_t i = 0; i < n_floats; ++i) {
    values[i] = std::bit_cast<float>(decode_u32(bytes.data() + offset + 4 * i));
  }
  return values;
}

}  // namespace

BinaryHeader read_binary_header(const std::filesystem::path& path, const char magic[4]) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError(path.string(), "cannot open file");
  }
  std::vector<unsigned char> head(12);
  in.read(reinterpret_cast<char*>(head.data()), 12);
  head.resize(static_cast<std::size_t>(in.gcount()));
  std::size_t offset = 0;
  return parse_header(head, path.string(), magic, &offset);
}

DescriptorSet load_descriptors(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  std::size_t offset = 0;
  const BinaryHeader h = parse_header(bytes, path.string(), "LDSC", &offset);
  DescriptorSet set;
  set.rows = h.count;
  set.dim = h.dim;
  set.data = read_payload(bytes, path.string(), offset, static_cast<std::size_t>(h.count) * h.dim);
  return set;
}

void write_descriptors(const DescriptorSet& set, const std::filesystem::path& path) {
  std::ofstream out = create_file(path, true);
  out.write("LDSC", 4);
  put_u32(out, set.rows);
  put_u32(out, set.dim);
  for (const float v : set.data) {
    put_f32(out, v);
  }
}

GlobalDescriptor load_global_descriptor(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  std::size_t offset = 0;
  const BinaryHeader h = parse_header(bytes, path.string(), "GDSC", &offset);
  GlobalDescriptor gd;
  gd.values = read_payload(bytes, path.string(), offset, h.dim);
  try {
    gd.normalize();
  } catch (const std::invalid_argument& e) {
    throw ParseError(path.string(), e.what());
  }
  return gd;
}

void write_global_descriptor(const GlobalDescriptor& gd, const std::filesystem::path& path) {
  std::ofstream out = create_file(path, true);
  out.write("GDSC", 4);
  put_u32(out, static_cast<std::uint32_t>(gd.values.size()));
  for (const float v : gd.values) {
    put_f32(out, v);
  }
}

std::vector<Eigen::Vector2d> load_keypoints(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  std::size_t offset = 0;
  const BinaryHeader h = parse_header(bytes, path.string(), "KPTS", &offset);
  const auto values = read_payload(bytes, path.string(), offset, 2 * static_cast<std::size_t>(h.count));
  std::vector<Eigen::Vector2d> keypoints(h.count);
  for (std::size_t i = 0; i < h.count; ++i) {
    keypoints[i] = Eigen::Vector2d(values[2 * i], values[2 * i + 1]);
  }
  return keypoints;
}

void write_keypoints(const std::vector<Eigen::Vector2d>& keypoints,
                     const std::filesystem::path& path) {
  std::ofstream out = create_file(path, true);
  out.write("KPTS", 4);
  put_u32(out, static_cast<std::uint32_t>(keypoints.size()));
  for (const auto& kp : keypoints) {
    put_f32(out, static_cast<float>(kp.x()));
    put_f32(out, static_cast<float>(kp.y()));
  }
}

std::map<std::string, Condition> load_conditions(const std::filesystem::path& path) {
  std::map<std::string, Condition> out;
  const std::string file = path.string();
  for_each_data_line(path, [&](int line_no, const std::string& line) {
    LineReader r(file, line_no, line);
    const std::string name = r.next_string("image name");
    const std::string tag = r.next_string("condition");
    r.expect_end();
    const auto cond = parse_condition(tag);
    if (!cond) {
      r.fail("condition must be 'day' or 'night', got '" + tag + "'");
    }
    if (!out.emplace(name, *cond).second) {
      r.fail("duplicate condition entry for " + name);
    }
  });
  return out;
}

void write_conditions(const std::map<std::string, Condition>& conditions,
                      const std::filesystem::path& path) {
  std::ofstream out = create_file(path);
  for (const auto& [name, cond] : conditions) {
    out << name << ' ' << to_string(cond) << '\n';
  }
}

std::vector<QueryIntrinsics> load_query_list(const std::filesystem::path& path) {
  std::vector<QueryIntrinsics> out;
  std::set<std::string> seen;
  const std::string file = path.string();
  for_each_data_line(path, [&](int line_no, const std::string& line) {
    LineReader r(file, line_no, line);
    QueryIntrinsics q;
    q.name = r.next_string("query name");
    const std::string model = r.next_string("camera model");
    if (model != "PINHOLE") {
      r.fail("unsupported camera model '" + model + "' (only PINHOLE)");
    }
    q.camera.width = r.next_int<int>("width");
    q.camera.height = r.next_int<int>("height");
    q.camera.fx = r.next_double("fx");
    q.camera.fy = r.next_double("fy");
    q.camera.cx = r.next_double("cx");
    q.camera.cy = r.next_double("cy");
    r.expect_end();
    try {
      q.camera.validate();
    } catch (const ConsistencyError& e) {
      r.fail(e.what());
    }
    if (!seen.insert(q.name).second) {
      r.fail("duplicate query " + q.name);
    }
    out.push_back(std::move(q));
  });
  return out;
}

void write_query_list(const std::vector<QueryIntrinsics>& queries,
                      const std::filesystem::path& path) {
  std::ofstream out = create_file(path);
  for (const auto& q : queries) {
    out << q.name << " PINHOLE " << q.camera.width << ' ' << q.camera.height << ' '
        << format_double(q.camera.fx) << ' ' << format_double(q.camera.fy) << ' '
        << format_double(q.camera.cx) << ' ' << format_double(q.camera.cy) << '\n';
  }
}

}  // namespace semloc
