#include "roomweave/bridge.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstring>

#include "roomweave/error.hpp"

namespace roomweave::bridge {

static_assert(std::endian::native == std::endian::little, "wire format assumes a little-endian host");

namespace {

constexpr std::uint64_t kMaxPayload = 1ull << 34;
constexpr std::uint32_t kMaxHeader = 1u << 26;

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorCode::Bridge, what); }

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T get(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

std::size_t tensor_floats(const nlohmann::json& shape) {
    if (!shape.is_array() || shape.size() != 3) fail("tensor shape must be [height, width, channels]");
    std::size_t n = 1;
    for (const auto& d : shape) {
        if (!d.is_number_integer() || d.get<long long>() < 0) fail("tensor dimension must be a non-negative integer");
        n *= d.get<std::size_t>();
    }
    return n;
}

std::vector<Image> split_payload(const nlohmann::json& header, const char* data, std::uint64_t len) {
    std::vector<Image> out;
    const auto it = header.find("tensors");
    if (it == header.end()) {
        if (len != 0) fail("payload present but header lists no tensors");
        return out;
    }
    if (!it->is_array()) fail("header field 'tensors' must be an array");
    std::uint64_t offset = 0;
    for (const auto& shape : *it) {
        const std::size_t n = tensor_floats(shape);
        if (offset + n * 4 > len) fail("payload shorter than the listed tensors");
        Image img(shape[1].get<int>(), shape[0].get<int>(), shape[2].get<int>());
        if (n) std::memcpy(img.data.data(), data + offset, n * 4);
        offset += n * 4;
        out.push_back(std::move(img));
    }
    if (offset != len) fail("payload length does not match the listed tensors");
    return out;
}

nlohmann::json with_shapes(nlohmann::json header, const std::vector<Image>& tensors) {
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto& t : tensors) shapes.push_back({t.height, t.width, t.channels});
    header["tensors"] = shapes;
    return header;
}

}  // namespace

std::string encode_message(const Message& msg) {
    const std::string header = with_shapes(msg.header, msg.tensors).dump();
    std::uint64_t payload = 0;
    for (const auto& t : msg.tensors) payload += t.data.size() * 4;
    std::string out(kMagic, 4);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    put<std::uint64_t>(out, payload);
    for (const auto& t : msg.tensors) out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * 4);
    return out;
}

Message decode_message(const std::string& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) fail("bad frame magic");
    const auto hlen = get<std::uint32_t>(bytes.data() + 4);
    if (hlen > kMaxHeader || 8ull + hlen + 8 > bytes.size()) fail("truncated frame header");
    Message msg;
    try {
        msg.header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + hlen);
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("malformed header: ") + e.what());
    }
    if (!msg.header.is_object()) fail("header is not an object");
    const auto plen = get<std::uint64_t>(bytes.data() + 8 + hlen);
    if (8ull + hlen + 8 + plen != bytes.size()) fail("frame length does not match payload length");
    msg.tensors = split_payload(msg.header, bytes.data() + 16 + hlen, plen);
    return msg;
}

Connection::~Connection() { close(); }

void Connection::close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

Connection Connection::connect(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == address.size())
        fail("bridge address must be host:port, got '" + address + "'");
    const std::string host = address.substr(0, colon), port = address.substr(colon + 1);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
        fail("cannot resolve " + address + ": " + gai_strerror(rc));
    int fd = -1;
    for (addrinfo* p = res; p; p = p->ai_next) {
        fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) fail("cannot connect to " + address);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return Connection(fd);
}

void Connection::write_all(const char* data, std::size_t n) {
    while (n > 0) {
        const ssize_t k = ::send(fd_, data, n, MSG_NOSIGNAL);
        if (k < 0 && errno == EINTR) continue;
        if (k <= 0) fail("connection lost while sending");
        data += k;
        n -= static_cast<std::size_t>(k);
    }
}

void Connection::read_all(char* data, std::size_t n) {
    while (n > 0) {
        const ssize_t k = ::recv(fd_, data, n, 0);
        if (k < 0 && errno == EINTR) continue;
        if (k <= 0) fail("connection closed by peer");
        data += k;
        n -= static_cast<std::size_t>(k);
    }
}

void Connection::send(const Message& msg) {
    if (fd_ < 0) fail("connection is closed");
    const std::string bytes = encode_message(msg);
    write_all(bytes.data(), bytes.size());
}

Message Connection::receive() {
    if (fd_ < 0) fail("connection is closed");
    char head[8];
    read_all(head, 8);
    if (std::memcmp(head, kMagic, 4) != 0) fail("bad frame magic");
    const auto hlen = get<std::uint32_t>(head + 4);
    if (hlen > kMaxHeader) fail("header too large");
    std::string bytes(head, 8);
    bytes.resize(8 + hlen + 8);
    read_all(bytes.data() + 8, hlen + 8);
    const auto plen = get<std::uint64_t>(bytes.data() + 8 + hlen);
    if (plen > kMaxPayload) fail("payload too large");
    bytes.resize(bytes.size() + plen);
    read_all(bytes.data() + 16 + hlen, plen);
    return decode_message(bytes);
}

Listener::Listener(int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) fail("cannot create socket");
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd_, 4) != 0) {
        ::close(fd_);
        fail("cannot listen on port " + std::to_string(port));
    }
    socklen_t len = sizeof(addr);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

Listener::~Listener() {
    if (fd_ >= 0) ::close(fd_);
}

Connection Listener::accept() {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) fail("accept failed");
    return Connection(fd);
}

Client::Client(const std::string& address) : conn_(Connection::connect(address)) {
    Message hello;
    hello.header["type"] = "HELLO";
    const Message r = call(std::move(hello));
    try {
        info_.latent_channels = r.header.at("latent_channels").get<int>();
        info_.scale = r.header.at("scale").get<int>();
        info_.schedule = r.header.value("schedule", std::vector<double>{});
        info_.max_batch = r.header.value("max_batch", 1);
        info_.concurrent = r.header.value("concurrent", false);
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("bad HELLO reply: ") + e.what());
    }
    if (info_.scale < 1 || info_.latent_channels < 1) fail("HELLO declared an invalid codec");
}

Message Client::call(Message req) {
    std::lock_guard<std::mutex> lock(mutex_);
    const std::uint64_t id = next_id_++;
    req.header["id"] = id;
    const std::string type = req.header.value("type", std::string("?"));
    Message reply;
    try {
        conn_.send(req);
        reply = conn_.receive();
    } catch (const Error& e) {
        conn_.close();
        fail("request " + std::to_string(id) + " (" + type + "): " + e.what());
    }
    if (reply.header.value("id", std::uint64_t{0}) != id)
        fail("request " + std::to_string(id) + " (" + type + "): reply id mismatch");
    if (reply.header.value("type", std::string()) == "ERROR")
        fail("request " + std::to_string(id) + " (" + type + "): backend error: " +
             reply.header.value("message", std::string("unspecified")));
    return reply;
}

std::string Client::invert_token(const std::vector<Image>& images) {
    Message req;
    req.header["type"] = "INVERT_TOKEN";
    req.tensors = images;
    const Message r = call(std::move(req));
    if (!r.header.contains("token") || !r.header["token"].is_string()) fail("INVERT_TOKEN reply has no token");
    return r.header["token"].get<std::string>();
}

namespace {

Image single_tensor(const Message& r, const char* what) {
    if (r.tensors.size() != 1) fail(std::string(what) + " reply must carry exactly one tensor");
    return r.tensors.front();
}

}  // namespace

diffusion::LatentGrid BridgeCodec::encode(const Image& rgb) const {
    Message req;
    req.header["type"] = "ENCODE";
    req.tensors = {rgb};
    return {single_tensor(client_->call(std::move(req)), "ENCODE"), scale()};
}

Image BridgeCodec::decode(const diffusion::LatentGrid& latent) const {
    Message req;
    req.header["type"] = "DECODE";
    req.tensors = {latent.values};
    return single_tensor(client_->call(std::move(req)), "DECODE");
}

diffusion::LatentGrid BridgeDenoiser::predict_epsilon(const diffusion::DenoiserInput& in) const {
    Message req;
    req.header["type"] = "EPS";
    req.header["t"] = in.step;
    req.header["alpha_bar"] = in.alpha_bar;
    req.header["prompt"] = in.prompt;
    req.header["geometry"] = view_to_json(in.geometry.view);
    if (in.geometry.window) req.header["window"] = {in.geometry.window->x0, in.geometry.window->width};
    req.tensors = {in.latents.values, in.reference.values, mask_to_tensor(in.latent_mask), in.reference_image,
                   mask_to_tensor(in.pixel_mask)};
    Image eps = single_tensor(client_->call(std::move(req)), "EPS");
    if (!eps.same_shape(in.latents.values)) fail("EPS reply shape differs from the latents");
    return {std::move(eps), in.latents.scale};
}

Image BridgeDepthPredictor::predict_initial(const Image& rgb, const ViewSpec& view) const {
    Message req;
    req.header["type"] = "DEPTH_INIT";
    req.header["geometry"] = view_to_json(view);
    req.tensors = {rgb};
    return single_tensor(client_->call(std::move(req)), "DEPTH_INIT");
}

Image BridgeDepthPredictor::refine(const Image& depth, const Image& anchor_depth, const Mask& anchor_mask,
                                   const Image& rgb, const ViewSpec& view) const {
    Message req;
    req.header["type"] = "DEPTH_REFINE";
    req.header["geometry"] = view_to_json(view);
    req.tensors = {depth, anchor_depth, mask_to_tensor(anchor_mask), rgb};
    return single_tensor(client_->call(std::move(req)), "DEPTH_REFINE");
}

nlohmann::json view_to_json(const ViewSpec& view) {
    nlohmann::json j;
    const Eigen::Matrix4d m = view.pose.matrix();
    std::vector<double> pose;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) pose.push_back(m(r, c));
    j["pose"] = pose;
    if (view.is_equirect()) {
        const auto& e = view.equirect_spec();
        j["projection"] = {{"kind", "equirect"}, {"width", e.width}, {"height", e.height},
                           {"lat_min", e.lat_min}, {"lat_max", e.lat_max}};
    } else {
        const auto& k = view.intrinsics();
        j["projection"] = {{"kind", "perspective"}, {"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
                           {"width", k.width}, {"height", k.height}};
    }
    return j;
}

ViewSpec view_from_json(const nlohmann::json& j) {
    try {
        const auto pose = j.at("pose").get<std::vector<double>>();
        if (pose.size() != 16) fail("pose must have 16 entries");
        Eigen::Matrix4d m;
        for (int i = 0; i < 16; ++i) m(i / 4, i % 4) = pose[i];
        const RigidTransform t = RigidTransform::from_matrix(m);
        const auto& p = j.at("projection");
        if (p.at("kind") == "equirect")
            return ViewSpec::equirect_band(p.at("width").get<int>(), p.at("height").get<int>(),
                                           p.at("lat_min").get<double>(), p.at("lat_max").get<double>(), t);
        CameraIntrinsics k;
        k.fx = p.at("fx").get<double>();
        k.fy = p.at("fy").get<double>();
        k.cx = p.at("cx").get<double>();
        k.cy = p.at("cy").get<double>();
        k.width = p.at("width").get<int>();
        k.height = p.at("height").get<int>();
        return ViewSpec::perspective(k, t);
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("bad geometry record: ") + e.what());
    }
}

Image mask_to_tensor(const Mask& m) {
    Image t(m.width, m.height, 1);
    for (std::size_t i = 0; i < m.data.size(); ++i) t.data[i] = m.data[i] ? 1.0f : 0.0f;
    return t;
}

Mask tensor_to_mask(const Image& t) {
    if (t.channels != 1) fail("mask tensor must have one channel");
    Mask m(t.width, t.height);
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = t.data[i] > 0.5f ? 1 : 0;
    return m;
}

}  // namespace roomweave::bridge
