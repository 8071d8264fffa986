//! Minimal chat-completion server for tests. One thread per connection,
//! `Connection: close` on every response.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

pub struct Reply {
    pub status: u16,
    pub body: String,
    pub headers: Vec<(String, String)>,
}

impl Reply {
    pub fn content(text: &str) -> Reply {
        let body = serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 2},
        });
        Reply { status: 200, body: body.to_string(), headers: Vec::new() }
    }

    pub fn status(status: u16) -> Reply {
        Reply { status, body: "{}".into(), headers: Vec::new() }
    }
}

pub struct Request {
    pub auth: Option<String>,
    pub body: serde_json::Value,
}

impl Request {
    pub fn prompt(&self) -> &str {
        self.body["messages"][0]["content"].as_str().unwrap_or_default()
    }
}

pub struct MockServer {
    pub base_url: String,
    pub hits: Arc<AtomicUsize>,
}

impl MockServer {
    pub fn start<F>(respond: F) -> MockServer
    where
        F: Fn(&Request, usize) -> Reply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}/v1", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let respond = Arc::new(respond);
        let counter = hits.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let respond = respond.clone();
                let counter = counter.clone();
                thread::spawn(move || {
                    let _ = serve(stream, &*respond, &counter);
                });
            }
        });
        MockServer { base_url, hits }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

fn serve<F>(mut stream: TcpStream, respond: &F, hits: &AtomicUsize) -> std::io::Result<()>
where
    F: Fn(&Request, usize) -> Reply,
{
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut length = 0;
    let mut auth = None;
    loop {
        line.clear();
        reader.read_line(&mut line)?;
        let header = line.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            match name.trim().to_ascii_lowercase().as_str() {
                "content-length" => length = value.trim().parse().unwrap_or(0),
                "authorization" => auth = Some(value.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body)?;
    let request = Request { auth, body: serde_json::from_slice(&body).unwrap_or_default() };
    let n = hits.fetch_add(1, Ordering::SeqCst);
    let reply = respond(&request, n);
    let mut head = format!(
        "HTTP/1.1 {} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n",
        reply.status,
        reply.body.len()
    );
    for (k, v) in &reply.headers {
        head.push_str(&format!("{k}: {v}\r\n"));
    }
    head.push_str("\r\n");
    stream.write_all(head.as_bytes())?;
    stream.write_all(reply.body.as_bytes())?;
    stream.flush()
}
