#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "nebula/collector.hpp"
#include "nebula/error.hpp"

namespace nebula {

namespace {

bool write_all(int fd, const char* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::write(fd, data, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

std::pair<std::string, std::string> split_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::invalid_argument, addr, "expected host:port");
  std::string host = addr.substr(0, colon);
  if (host.empty()) host = "127.0.0.1";
  return {host, addr.substr(colon + 1)};
}

addrinfo* resolve(const std::string& addr, bool passive) {
  auto [host, port] = split_addr(addr);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw Error(Errc::invalid_argument, addr, ::gai_strerror(rc));
  }
  return res;
}

}  // namespace

int listen_tcp(const std::string& addr) {
  addrinfo* res = resolve(addr, true);
  int fd = -1;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 4) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw Error(Errc::invalid_argument, addr, std::strerror(errno));
  return fd;
}

int accept_one(int listen_fd) {
  for (;;) {
    int fd = ::accept(listen_fd, nullptr, nullptr);
    if (fd >= 0) return fd;
    if (errno != EINTR) throw Error(Errc::invalid_argument, "accept", std::strerror(errno));
  }
}

int connect_tcp(const std::string& addr) {
  addrinfo* res = resolve(addr, false);
  int fd = -1;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw Error(Errc::invalid_argument, addr, std::strerror(errno));
  return fd;
}

RelayStats relay(int client_in, int client_out, int upstream_fd, Interceptor& interceptor,
                 const std::function<void(const Event&)>& sink,
                 const std::function<std::int64_t()>& clock_ms) {
  RelayStats stats;
  LineSplitter to_server, from_server;

  auto tap = [&](Direction dir) {
    return [&, dir](std::string_view line) {
      ++stats.frames;
      RpcFrame frame;
      try {
        frame = digest_frame(line, dir, clock_ms());
      } catch (const Error&) {
        ++stats.undecodable_frames;
        return;
      }
      for (const auto& e : interceptor.on_frame(frame)) sink(e);
    };
  };

  // Client EOF half-closes the upstream write side and keeps draining
  // responses; upstream EOF ends the relay.
  bool client_open = true;
  char buf[64 * 1024];
  for (;;) {
    pollfd fds[2] = {{client_open ? client_in : -1, POLLIN, 0}, {upstream_fd, POLLIN, 0}};
    if (::poll(fds, 2, -1) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (client_open && (fds[0].revents & (POLLIN | POLLHUP | POLLERR))) {
      const ssize_t n = ::read(client_in, buf, sizeof(buf));
      if (n <= 0) {
        client_open = false;
        ::shutdown(upstream_fd, SHUT_WR);
      } else {
        const std::string_view chunk(buf, static_cast<std::size_t>(n));
        if (!write_all(upstream_fd, buf, chunk.size())) break;
        stats.bytes_to_server += chunk.size();
        to_server.feed(chunk, tap(Direction::to_server));
      }
    }
    if (fds[1].revents & (POLLIN | POLLHUP | POLLERR)) {
      const ssize_t n = ::read(upstream_fd, buf, sizeof(buf));
      if (n <= 0) break;
      const std::string_view chunk(buf, static_cast<std::size_t>(n));
      if (!write_all(client_out, buf, chunk.size())) break;
      stats.bytes_from_server += chunk.size();
      from_server.feed(chunk, tap(Direction::from_server));
    }
  }
  return stats;
}

}  // namespace nebula
