#include "core/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace mrct {

namespace {

constexpr char kMagic[8] = {'M', 'R', 'C', 'T', 'C', 'K', 'P', 'T'};

json net_spec_to_json(const NetSpec& n) {
    json j;
    j["name"] = n.name;
    j["kind"] = n.kind;
    j["in_channels"] = n.in_channels;
    j["out_channels"] = n.out_channels;
    j["base_width"] = n.base_width;
    j["depth"] = n.depth;
    j["n_layers"] = n.n_layers;
    return j;
}

NetSpec net_spec_from_json(const json& j) {
    NetSpec n;
    n.name = j.at("name").get<std::string>();
    n.kind = j.at("kind").get<std::string>();
    n.in_channels = j.at("in_channels").get<int>();
    n.out_channels = j.at("out_channels").get<int>();
    n.base_width = j.at("base_width").get<int>();
    n.depth = j.at("depth").get<int>();
    n.n_layers = j.at("n_layers").get<int>();
    return n;
}

std::string hex_u64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_blob(std::ofstream& f, const std::vector<double>& v) {
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_blob(std::ifstream& f, std::vector<double>& v, std::size_t n, const fs::path& path) {
    v.resize(n);
    f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!f) throw_io_error("checkpoint truncated: " + path.string());
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
    if (ckpt.nets.size() != ckpt.params.size() || ckpt.nets.size() != ckpt.adam_t.size() ||
        ckpt.nets.size() != ckpt.adam_m.size() || ckpt.nets.size() != ckpt.adam_v.size())
        throw_internal("save_checkpoint: per-net vectors disagree");

    json h;
    h["version"] = ckpt.version;
    h["model"] = model_kind_name(ckpt.model);
    h["seed"] = hex_u64(ckpt.seed);
    h["config_hash"] = ckpt.config_hash;
    h["epoch"] = ckpt.epoch;
    h["iter"] = ckpt.iter;
    h["loader_rng_state"] = hex_u64(ckpt.loader_rng_state);
    h["route_rng_state"] = hex_u64(ckpt.route_rng_state);
    json nets = json::array();
    for (std::size_t i = 0; i < ckpt.nets.size(); ++i) {
        json n = net_spec_to_json(ckpt.nets[i]);
        n["param_count"] = ckpt.params[i].size();
        n["adam_t"] = ckpt.adam_t[i];
        if (ckpt.adam_m[i].size() != ckpt.params[i].size() ||
            ckpt.adam_v[i].size() != ckpt.params[i].size())
            throw_internal("save_checkpoint: moment blobs disagree with params");
        nets.push_back(n);
    }
    h["nets"] = nets;
    std::string header = h.dump();

    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw_io_error("cannot write checkpoint: " + tmp.string());
        f.write(kMagic, 8);
        std::uint32_t ver = static_cast<std::uint32_t>(ckpt.version);
        std::uint64_t hlen = header.size();
        f.write(reinterpret_cast<const char*>(&ver), sizeof ver);
        f.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
        f.write(header.data(), static_cast<std::streamsize>(header.size()));
        for (std::size_t i = 0; i < ckpt.nets.size(); ++i) {
            write_blob(f, ckpt.params[i]);
            write_blob(f, ckpt.adam_m[i]);
            write_blob(f, ckpt.adam_v[i]);
        }
        if (!f) throw_io_error("short write on checkpoint: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw_io_error("cannot move checkpoint into place: " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw_io_error("cannot open checkpoint: " + path.string());
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw_io_error("not a checkpoint file: " + path.string());
    std::uint32_t ver = 0;
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&ver), sizeof ver);
    f.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
    if (!f || ver != 1) throw_io_error("unsupported checkpoint version in " + path.string());
    if (hlen > (1u << 20)) throw_io_error("implausible checkpoint header in " + path.string());
    std::string header(hlen, '\0');
    f.read(header.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw_io_error("checkpoint truncated: " + path.string());

    Checkpoint c;
    try {
        json h = json::parse(header);
        c.version = h.at("version").get<int>();
        c.model = model_kind_from_name(h.at("model").get<std::string>());
        c.seed = std::strtoull(h.at("seed").get<std::string>().c_str(), nullptr, 16);
        c.config_hash = h.at("config_hash").get<std::string>();
        c.epoch = h.at("epoch").get<int>();
        c.iter = h.at("iter").get<int>();
        c.loader_rng_state = std::strtoull(h.at("loader_rng_state").get<std::string>().c_str(), nullptr, 16);
        c.route_rng_state = std::strtoull(h.at("route_rng_state").get<std::string>().c_str(), nullptr, 16);
        for (const json& n : h.at("nets")) {
            c.nets.push_back(net_spec_from_json(n));
            c.adam_t.push_back(n.at("adam_t").get<std::uint64_t>());
            std::size_t count = n.at("param_count").get<std::size_t>();
            c.params.emplace_back();
            c.params.back().resize(count); // placeholder; filled below
        }
    } catch (const json::exception& e) {
        throw_io_error("malformed checkpoint header in " + path.string() + ": " + e.what());
    }
    c.adam_m.resize(c.nets.size());
    c.adam_v.resize(c.nets.size());
    for (std::size_t i = 0; i < c.nets.size(); ++i) {
        std::size_t n = c.params[i].size();
        read_blob(f, c.params[i], n, path);
        read_blob(f, c.adam_m[i], n, path);
        read_blob(f, c.adam_v[i], n, path);
    }
    return c;
}

std::vector<double> flatten_parameters(Net& net) {
    std::vector<double> flat;
    for (Tensor* p : net.parameters()) flat.insert(flat.end(), p->data.begin(), p->data.end());
    return flat;
}

void load_parameters(Net& net, const std::vector<double>& flat) {
    std::size_t off = 0;
    for (Tensor* p : net.parameters()) {
        if (off + p->data.size() > flat.size())
            throw_invalid_argument("load_parameters: blob smaller than network");
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + p->data.size()), p->data.begin());
        off += p->data.size();
    }
    if (off != flat.size()) throw_invalid_argument("load_parameters: blob larger than network");
}

} // namespace mrct
