//! Small shared helpers: stable hashing, atomic writes, bounded parallelism.

use std::collections::VecDeque;
use std::io;
use std::path::Path;
use std::sync::Mutex;

/// FNV-1a 64-bit hash. Stable across platforms and Rust versions, unlike
/// `DefaultHasher`, so anything derived from it is bit-reproducible.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Collapse every whitespace run to a single space and trim the ends.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercase hex encoding.
pub fn to_hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Write `bytes` to `path` via a temp file in the same directory plus rename,
/// so readers never observe a partially written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Apply `f` to every item on up to `limit` worker threads, returning results
/// in input order. `limit` bounds in-flight work (remote requests, mostly).
pub fn bounded_parallel_map<T, U, F>(items: Vec<T>, limit: usize, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync,
{
    let limit = limit.max(1);
    let n = items.len();
    if n == 0 {
        return Vec::new();
    }
    if limit == 1 || n == 1 {
        return items.into_iter().map(f).collect();
    }
    let queue: Mutex<VecDeque<(usize, T)>> = Mutex::new(items.into_iter().enumerate().collect());
    let results: Mutex<Vec<Option<U>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..limit.min(n) {
            scope.spawn(|| loop {
                let next = queue.lock().expect("queue poisoned").pop_front();
                match next {
                    Some((i, item)) => {
                        let out = f(item);
                        results.lock().expect("results poisoned")[i] = Some(out);
                    }
                    None => break,
                }
            });
        }
    });
    results
        .into_inner()
        .expect("results poisoned")
        .into_iter()
        .map(|slot| slot.expect("worker wrote every slot"))
        .collect()
}
