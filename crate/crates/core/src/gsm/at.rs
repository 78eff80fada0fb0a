//! Parser for the text-mode AT command subset the modem understands.

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AtCommand {
    /// Bare `AT`.
    Attention,
    /// `AT+CMGF=<mode>`
    MessageFormat(u8),
    /// `AT+CPMS="<mem>"[,...]`
    PreferredStorage(Vec<String>),
    /// `AT+CMGR=<index>`
    ReadMessage(u32),
    /// `AT+CMSS=<index>,"<da>"`
    SendFromStorage { index: u32, number: String },
    /// `AT+CMGD=<index>`
    DeleteMessage(u32),
    /// `ATD<number>;`
    Dial(String),
}

/// Parses one command line (without its terminating CR). Returns `None` for
/// anything outside the supported subset; the modem answers those with ERROR.
pub fn parse_line(line: &str) -> Option<AtCommand> {
    let line = line.trim();
    let upper = line.to_ascii_uppercase();
    if !upper.starts_with("AT") {
        return None;
    }
    let rest = &line[2..];
    let rest_upper = &upper[2..];

    if rest.is_empty() {
        return Some(AtCommand::Attention);
    }
    if let Some(dial) = rest_upper.strip_prefix('D') {
        let number = dial.strip_suffix(';')?.trim();
        return Some(AtCommand::Dial(number.to_string()));
    }
    if let Some(arg) = rest_upper.strip_prefix("+CMGF=") {
        return arg.trim().parse().ok().map(AtCommand::MessageFormat);
    }
    if let Some(arg) = rest.get(6..).filter(|_| rest_upper.starts_with("+CPMS=")) {
        let stores = arg
            .split(',')
            .map(|s| unquote(s).map(str::to_string))
            .collect::<Option<Vec<_>>>()?;
        return Some(AtCommand::PreferredStorage(stores));
    }
    if let Some(arg) = rest_upper.strip_prefix("+CMGR=") {
        return parse_index(arg).map(AtCommand::ReadMessage);
    }
    if let Some(arg) = rest_upper.strip_prefix("+CMGD=") {
        return parse_index(arg).map(AtCommand::DeleteMessage);
    }
    if let Some(arg) = rest.get(6..).filter(|_| rest_upper.starts_with("+CMSS=")) {
        let (index, number) = arg.split_once(',')?;
        return Some(AtCommand::SendFromStorage {
            index: parse_index(index)?,
            number: unquote(number)?.to_string(),
        });
    }
    None
}

fn parse_index(s: &str) -> Option<u32> {
    let s = s.trim();
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

fn unquote(s: &str) -> Option<&str> {
    let s = s.trim();
    let inner = s.strip_prefix('"')?.strip_suffix('"')?;
    Some(inner.trim())
}
