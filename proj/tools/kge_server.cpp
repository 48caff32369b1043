// HTTP server for the analysis API. Every flag can also be set through the
// environment variable shown in --help.
#include <iostream>

#include "CLI11.hpp"
#include "kge/service.hpp"
#include "kge/version.hpp"
// After the Eigen headers: <resolv.h> defines a _res macro that collides with them.
#include "httplib.h"

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-guided embedding analysis server"};
  std::string host = "127.0.0.1";
  int port = 8080;
  kge::ServiceConfig config;
  std::size_t body_mb = config.max_body_bytes >> 20;
  double clr = 0;
  app.add_option("--host", host, "listen address")->envname("KGE_HOST");
  app.add_option("--port", port, "listen port")->envname("KGE_PORT")->check(CLI::Range(0, 65535));
  app.add_option("--max-sessions", config.max_sessions, "concurrent session limit")->envname("KGE_MAX_SESSIONS");
  app.add_option("--max-rows", config.max_rows, "largest dataset accepted, in rows")->envname("KGE_MAX_ROWS");
  app.add_option("--max-body-mb", body_mb, "largest request body, in MiB")->envname("KGE_MAX_BODY_MB");
  app.add_option("--clr", clr, "default classification loss ratio, percent")->envname("KGE_CLR")->check(CLI::Range(0.0, 100.0));
  app.add_option("--eta", config.defaults.eta, "default learning rate")->envname("KGE_ETA");
  app.add_option("--batch", config.defaults.batch_size, "default batch size")->envname("KGE_BATCH");
  app.add_option("--epochs", config.defaults.epochs, "default epochs")->envname("KGE_EPOCHS");
  app.add_option("--embed-dim", config.defaults.embed_dim, "default embedding size")->envname("KGE_EMBED_DIM");
  app.add_option("--hidden-dim", config.defaults.hidden_dim, "default hidden layer width")->envname("KGE_HIDDEN_DIM");
  app.set_version_flag("--version", kge::kVersion);
  CLI11_PARSE(app, argc, argv);

  config.max_body_bytes = body_mb << 20;
  config.defaults.alpha = kge::Hyperparams::alpha_from_clr_percent(clr);
  try {
    config.defaults.validate();
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  kge::Service service(config);
  httplib::Server server;
  service.bind(server);
  std::cout << "listening on " << host << ":" << port << std::endl;
  if (!server.listen(host, port)) {
    std::cerr << "cannot listen on " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}
