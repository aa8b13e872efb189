#![no_main]

use libfuzzer_sys::fuzz_target;
use numbias::judge::parse_chat_response;

fuzz_target!(|data: &[u8]| {
    let _ = parse_chat_response(data);
});
