use firewatch_monitor::query::PhraseStyle;
use firewatch_monitor::{parse_keyword_query, Query};

const VERBATIM: &str = "(bala voando) OR tiro OR tiroteio OR baleado";

pub fn check() -> Result<String, String> {
    let q = parse_keyword_query(VERBATIM).map_err(|e| e.to_string())?;
    let want = Query::Or(vec![
        Query::Phrase {
            words: vec!["bala".into(), "voando".into()],
            style: PhraseStyle::Parenthesized,
        },
        Query::Term("tiro".into()),
        Query::Term("tiroteio".into()),
        Query::Term("baleado".into()),
    ]);
    ensure!(q == want, "parsed as {q:?}");
    let printed = q.to_string();
    ensure!(printed == VERBATIM, "printed back as {printed:?}");
    ensure!(parse_keyword_query(&printed).map_err(|e| e.to_string())? == q, "second parse differs");

    for (text, hit) in [
        ("bala voando aqui agora", true),
        ("Tiroteio na linha amarela", true),
        ("moleque BALEADO", true),
        ("a bala acabou", false),
        ("tirou foto", false),
    ] {
        ensure!(q.matches(text) == hit, "{text:?} should {}match", if hit { "" } else { "not " });
    }

    let cases = [
        ("(bala voando OR tiro", 20),
        ("bala voando) OR tiro", 11),
        ("((tiro)", 7),
        ("\"bala voando OR tiro", 20),
        ("tiro OR", 7),
    ];
    for (src, at) in cases {
        match parse_keyword_query(src) {
            Ok(q) => return Err(format!("{src:?} was accepted as {q:?}")),
            Err(e) => ensure!(e.position == at, "{src:?}: reported offset {} ({e}), expected {at}", e.position),
        }
    }
    Ok(format!("verbatim query round-trips; {} malformed inputs rejected at the right offset", cases.len()))
}
