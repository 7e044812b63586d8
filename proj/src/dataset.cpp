// SPDX-License-Identifier: Apache-2.0
#include "ovqa/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace ovqa::scenegen {

using nlohmann::json;

namespace {

json to_json(const diff::NDArray& a) {
  json arr = json::array();
  for (std::size_t i = 0; i < a.numel(); ++i) arr.push_back(a[i]);
  return arr;
}

diff::NDArray vector_from_json(const json& arr) {
  std::vector<double> v;
  v.reserve(arr.size());
  for (const auto& x : arr) v.push_back(x.get<double>());
  return diff::NDArray::vector(std::move(v));
}

json scene_to_json(const SceneRecord& rec) {
  json j;
  j["id"] = rec.id;
  j["seed"] = rec.spec.seed;
  j["frames"] = rec.spec.frame_count;
  j["width"] = rec.spec.width;
  j["height"] = rec.spec.height;
  json objs = json::array();
  for (const ObjectSpec& o : rec.spec.objects) {
    json jo;
    jo["id"] = o.id;
    jo["shape"] = static_cast<int>(o.shape);
    jo["color"] = static_cast<int>(o.color);
    jo["size"] = static_cast<int>(o.size);
    jo["moving0"] = o.initially_moving;
    jo["rotating0"] = o.initially_rotating;
    json traj = json::array();
    for (const FramePose& p : o.trajectory) traj.push_back({p.cx, p.cy, p.ex, p.ey});
    jo["traj"] = std::move(traj);
    json evs = json::array();
    for (const Event& e : o.events) evs.push_back({static_cast<int>(e.action), e.frame});
    jo["events"] = std::move(evs);
    objs.push_back(std::move(jo));
  }
  j["objects"] = std::move(objs);

  json frames = json::array();
  for (const auto& dets : rec.rendered.frames) {
    json jf = json::array();
    for (const Detection& d : dets) {
      json jd;
      jd["box"] = {d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max};
      jd["feat"] = to_json(d.feature);
      jd["conf"] = d.confidence;
      jd["tid"] = d.true_id;
      jf.push_back(std::move(jd));
    }
    frames.push_back(std::move(jf));
  }
  j["detections"] = std::move(frames);

  json ctx = json::array();
  for (const auto& c : rec.rendered.context) ctx.push_back(to_json(c));
  j["context"] = std::move(ctx);
  return j;
}

SceneRecord scene_from_json(const json& j) {
  SceneRecord rec;
  rec.id = j.at("id").get<int>();
  rec.spec.seed = j.at("seed").get<std::uint64_t>();
  rec.spec.frame_count = j.at("frames").get<int>();
  rec.spec.width = j.at("width").get<int>();
  rec.spec.height = j.at("height").get<int>();
  for (const auto& jo : j.at("objects")) {
    ObjectSpec o;
    o.id = jo.at("id").get<int>();
    o.shape = static_cast<Shape>(jo.at("shape").get<int>());
    o.color = static_cast<Color>(jo.at("color").get<int>());
    o.size = static_cast<ObjSize>(jo.at("size").get<int>());
    o.initially_moving = jo.at("moving0").get<bool>();
    o.initially_rotating = jo.at("rotating0").get<bool>();
    for (const auto& jp : jo.at("traj")) {
      o.trajectory.push_back({jp[0].get<double>(), jp[1].get<double>(), jp[2].get<double>(),
                              jp[3].get<double>()});
    }
    for (const auto& je : jo.at("events")) {
      o.events.push_back({static_cast<EventAction>(je[0].get<int>()), je[1].get<int>()});
    }
    rec.spec.objects.push_back(std::move(o));
  }
  for (const auto& jf : j.at("detections")) {
    std::vector<Detection> dets;
    for (const auto& jd : jf) {
      Detection d;
      const auto& b = jd.at("box");
      d.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      d.feature = vector_from_json(jd.at("feat"));
      d.confidence = jd.at("conf").get<double>();
      d.true_id = jd.at("tid").get<int>();
      dets.push_back(std::move(d));
    }
    rec.rendered.frames.push_back(std::move(dets));
  }
  for (std::size_t f = 0; f < rec.rendered.frames.size(); ++f) {
    for (Detection& d : rec.rendered.frames[f]) d.frame = static_cast<int>(f);
  }
  for (const auto& jc : j.at("context")) rec.rendered.context.push_back(vector_from_json(jc));
  return rec;
}

}  // namespace

const SceneRecord& Dataset::scene_by_id(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= scenes.size() || scenes[id].id != id) {
    for (const SceneRecord& s : scenes) {
      if (s.id == id) return s;
    }
    throw std::runtime_error("dataset: unknown scene id " + std::to_string(id));
  }
  return scenes[id];
}

const std::vector<int>& Dataset::split_ids(const std::string& name) const {
  if (name == "train") return splits.train;
  if (name == "test") return splits.test;
  if (name == "val") return splits.val;
  throw std::runtime_error("dataset: unknown split '" + name + "' (use train/test/val)");
}

void write_vocabulary(const std::string& path, const std::vector<std::string>& tokens,
                      const std::vector<std::string>& answers) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("dataset: cannot write '" + path + "'");
  os << "[tokens]\n";
  for (const auto& t : tokens) os << t << "\n";
  os << "[answers]\n";
  for (const auto& a : answers) os << a << "\n";
}

void write_dataset(const std::string& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("dataset: cannot create directory '" + dir + "'");

  {
    json j;
    j["version"] = ds.meta.version;
    j["seed"] = ds.meta.seed;
    j["frames"] = ds.meta.frames;
    j["width"] = ds.meta.width;
    j["height"] = ds.meta.height;
    j["d_a"] = ds.meta.d_a;
    j["d_c"] = ds.meta.d_c;
    j["max_count"] = ds.meta.max_count;
    j["p_miss"] = ds.meta.p_miss;
    j["jitter_sigma"] = ds.meta.jitter_sigma;
    j["feature_sigma"] = ds.meta.feature_sigma;
    std::ofstream os(dir + "/meta.json", std::ios::trunc);
    if (!os) throw std::runtime_error("dataset: cannot write meta.json under '" + dir + "'");
    os << j.dump(2) << "\n";
  }

  write_vocabulary(dir + "/vocab.txt", ds.tokens, ds.answers);

  {
    std::ofstream os(dir + "/scenes.jsonl", std::ios::trunc);
    if (!os) throw std::runtime_error("dataset: cannot write scenes.jsonl");
    for (const SceneRecord& s : ds.scenes) os << scene_to_json(s).dump() << "\n";
  }
  {
    std::ofstream os(dir + "/qa.jsonl", std::ios::trunc);
    if (!os) throw std::runtime_error("dataset: cannot write qa.jsonl");
    for (const QaRecord& q : ds.qa) {
      json j;
      j["scene"] = q.scene_id;
      j["category"] = to_string(q.item.category);
      j["question"] = q.item.question;
      j["answer"] = q.item.answer;
      os << j.dump() << "\n";
    }
  }
  {
    json j;
    j["train"] = ds.splits.train;
    j["test"] = ds.splits.test;
    j["val"] = ds.splits.val;
    std::ofstream os(dir + "/splits.json", std::ios::trunc);
    if (!os) throw std::runtime_error("dataset: cannot write splits.json");
    os << j.dump(2) << "\n";
  }
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  {
    std::ifstream is(dir + "/meta.json");
    if (!is) throw std::runtime_error("dataset: cannot open '" + dir + "/meta.json'");
    json j = json::parse(is);
    ds.meta.version = j.at("version").get<int>();
    ds.meta.seed = j.at("seed").get<std::uint64_t>();
    ds.meta.frames = j.at("frames").get<int>();
    ds.meta.width = j.at("width").get<int>();
    ds.meta.height = j.at("height").get<int>();
    ds.meta.d_a = j.at("d_a").get<int>();
    ds.meta.d_c = j.at("d_c").get<int>();
    ds.meta.max_count = j.at("max_count").get<int>();
    ds.meta.p_miss = j.at("p_miss").get<double>();
    ds.meta.jitter_sigma = j.at("jitter_sigma").get<double>();
    ds.meta.feature_sigma = j.at("feature_sigma").get<double>();
  }
  {
    std::ifstream is(dir + "/vocab.txt");
    if (!is) throw std::runtime_error("dataset: cannot open '" + dir + "/vocab.txt'");
    std::string line;
    std::vector<std::string>* target = nullptr;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      if (line == "[tokens]") { target = &ds.tokens; continue; }
      if (line == "[answers]") { target = &ds.answers; continue; }
      if (!target) throw std::runtime_error("dataset: vocab.txt line outside a section");
      target->push_back(line);
    }
  }
  {
    std::ifstream is(dir + "/scenes.jsonl");
    if (!is) throw std::runtime_error("dataset: cannot open '" + dir + "/scenes.jsonl'");
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      ds.scenes.push_back(scene_from_json(json::parse(line)));
    }
  }
  {
    std::ifstream is(dir + "/qa.jsonl");
    if (!is) throw std::runtime_error("dataset: cannot open '" + dir + "/qa.jsonl'");
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      QaRecord q;
      q.scene_id = j.at("scene").get<int>();
      const auto cat = category_from_string(j.at("category").get<std::string>());
      if (!cat) throw std::runtime_error("dataset: bad category in qa.jsonl");
      q.item.category = *cat;
      q.item.question = j.at("question").get<std::vector<std::string>>();
      q.item.answer = j.at("answer").get<int>();
      ds.qa.push_back(std::move(q));
    }
  }
  {
    std::ifstream is(dir + "/splits.json");
    if (!is) throw std::runtime_error("dataset: cannot open '" + dir + "/splits.json'");
    json j = json::parse(is);
    ds.splits.train = j.at("train").get<std::vector<int>>();
    ds.splits.test = j.at("test").get<std::vector<int>>();
    ds.splits.val = j.at("val").get<std::vector<int>>();
  }
  return ds;
}

}  // namespace ovqa::scenegen
