//! Single-threaded HTTP transport for the gateway.

use std::io::Write;
use std::path::Path;

use ledgerair_core::gateway::{ApiRequest, ApiResponse, AuthConfig, Gateway};
use ledgerair_core::platform::{Platform, PlatformConfig};
use tiny_http::{Header, Method, Response, Server};

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("static header is valid")
}

fn cors() -> [Header; 3] {
    [
        header("Access-Control-Allow-Origin", "*"),
        header(
            "Access-Control-Allow-Headers",
            "Authorization, Content-Type",
        ),
        header("Access-Control-Allow-Methods", "GET, POST, OPTIONS"),
    ]
}

pub fn serve(
    config: PlatformConfig,
    log: Option<&Path>,
    listen: &str,
    customer_token: String,
    admin_token: String,
) -> Result<(), String> {
    let mut platform = match log {
        Some(path) => Platform::with_log(config, path),
        None => Platform::new(config),
    }
    .map_err(|e| e.to_string())?;
    let gateway = Gateway::new(AuthConfig::new(customer_token, admin_token));
    let server = Server::http(listen).map_err(|e| format!("cannot listen on {listen}: {e}"))?;
    let addr = server
        .server_addr()
        .to_ip()
        .map(|a| a.to_string())
        .unwrap_or_else(|| listen.to_string());
    println!("listening on http://{addr}");
    std::io::stdout().flush().map_err(|e| e.to_string())?;

    for mut request in server.incoming_requests() {
        if *request.method() == Method::Options {
            let mut response = Response::empty(204);
            for h in cors() {
                response.add_header(h);
            }
            let _ = request.respond(response);
            continue;
        }
        let authorization = request
            .headers()
            .iter()
            .find(|h| h.field.equiv("Authorization"))
            .map(|h| h.value.as_str().to_string());
        let mut body = Vec::new();
        let api = match request.as_reader().read_to_end(&mut body) {
            Ok(_) => ApiRequest::from_http(
                request.method().as_str(),
                request.url(),
                authorization.as_deref(),
                &body,
            )
            .map(|req| gateway.handle(&mut platform, &req))
            .unwrap_or_else(|bad| bad),
            Err(e) => ApiResponse::error(
                400,
                "VALIDATION",
                &format!("unreadable body: {e}"),
                serde_json::Value::Null,
            ),
        };
        let mut response = Response::from_string(api.body.to_string())
            .with_status_code(api.status)
            .with_header(header("Content-Type", "application/json"));
        for h in cors() {
            response.add_header(h);
        }
        if let Err(e) = request.respond(response) {
            eprintln!("response failed: {e}");
        }
    }
    Ok(())
}
