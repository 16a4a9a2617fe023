#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "roomweave/depth.hpp"
#include "roomweave/diffusion.hpp"

namespace roomweave::bridge {

// Frame layout (all integers little-endian):
//   "RWB1" | u32 header_len | header_len bytes of UTF-8 JSON | u64 payload_len | payload
// The payload is the concatenation of the float32 tensors listed in
// header["tensors"] as [height, width, channels] shapes.

inline constexpr char kMagic[4] = {'R', 'W', 'B', '1'};

struct Message {
    nlohmann::json header = nlohmann::json::object();
    std::vector<Image> tensors;
};

std::string encode_message(const Message& msg);
/// Parses one complete frame; throws E_BRIDGE on malformed input.
Message decode_message(const std::string& bytes);

/// Blocking POSIX stream socket carrying framed messages.
class Connection {
public:
    Connection() = default;
    explicit Connection(int fd) : fd_(fd) {}
    ~Connection();
    Connection(const Connection&) = delete;
    Connection& operator=(const Connection&) = delete;
    Connection(Connection&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }

    /// "host:port"
    static Connection connect(const std::string& address);

    void send(const Message& msg);
    Message receive();
    bool open() const { return fd_ >= 0; }
    void close();

private:
    void write_all(const char* data, std::size_t n);
    void read_all(char* data, std::size_t n);
    int fd_ = -1;
};

/// Listening socket for tests and local backends; binds 127.0.0.1.
class Listener {
public:
    explicit Listener(int port = 0);
    ~Listener();
    int port() const { return port_; }
    Connection accept();

private:
    int fd_ = -1;
    int port_ = 0;
};

struct BackendInfo {
    int latent_channels = 3;
    int scale = 1;
    std::vector<double> schedule;
    int max_batch = 1;
    bool concurrent = false;
};

/// Request/response client. Calls are serialized over one connection.
class Client {
public:
    explicit Client(const std::string& address);
    const BackendInfo& info() const { return info_; }
    /// Sends `req` with a fresh id; throws E_BRIDGE on transport errors, id
    /// mismatch or an ERROR reply.
    Message call(Message req);
    std::string invert_token(const std::vector<Image>& images);

private:
    Connection conn_;
    std::mutex mutex_;
    std::uint64_t next_id_ = 1;
    BackendInfo info_;
};

class BridgeCodec final : public diffusion::LatentCodec {
public:
    explicit BridgeCodec(std::shared_ptr<Client> client) : client_(std::move(client)) {}
    int scale() const override { return client_->info().scale; }
    int channels() const override { return client_->info().latent_channels; }
    diffusion::LatentGrid encode(const Image& rgb) const override;
    Image decode(const diffusion::LatentGrid& latent) const override;

private:
    std::shared_ptr<Client> client_;
};

class BridgeDenoiser final : public diffusion::Denoiser {
public:
    explicit BridgeDenoiser(std::shared_ptr<Client> client) : client_(std::move(client)) {}
    diffusion::LatentGrid predict_epsilon(const diffusion::DenoiserInput& input) const override;
    bool concurrent() const override { return false; }

private:
    std::shared_ptr<Client> client_;
};

class BridgeDepthPredictor final : public depth::DepthPredictor {
public:
    explicit BridgeDepthPredictor(std::shared_ptr<Client> client) : client_(std::move(client)) {}
    Image predict_initial(const Image& rgb, const ViewSpec& view) const override;
    Image refine(const Image& depth, const Image& anchor_depth, const Mask& anchor_mask, const Image& rgb,
                 const ViewSpec& view) const override;
    bool concurrent() const override { return false; }

private:
    std::shared_ptr<Client> client_;
};

/// View geometry as JSON: {"pose": 16 row-major numbers, "projection": {...}}.
nlohmann::json view_to_json(const ViewSpec& view);
ViewSpec view_from_json(const nlohmann::json& j);

Image mask_to_tensor(const Mask& m);
Mask tensor_to_mask(const Image& t);

}  // namespace roomweave::bridge
