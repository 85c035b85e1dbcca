//! Interactive session: the configured planner plays the system side and
//! the person at the terminal types the user's spans.

use std::io::{BufRead, Write};

use diffplan_core::env::{check_user_span, Environment};
use diffplan_core::{DialogueState, TokenId, Vocabulary};

use crate::commands::{build_planner, model_for};
use crate::CliError;
use crate::Options;

enum Reply {
    Span(Vec<TokenId>),
    Retry(String),
    Quit,
}

fn parse_reply(line: &str, env: &dyn Environment, turn: usize, vocab: &Vocabulary) -> Reply {
    let line = line.trim();
    if line == "quit" || line == "exit" {
        return Reply::Quit;
    }
    let mut span = Vec::new();
    for word in line.split_whitespace() {
        match vocab.id(word) {
            Some(t) => span.push(t),
            None => {
                let near = vocab.nearest(word, 3).join(", ");
                return Reply::Retry(format!("unknown token `{word}`; did you mean: {near}"));
            }
        }
    }
    match check_user_span(env, turn, &span) {
        Ok(()) => Reply::Span(span),
        Err(_) => Reply::Retry(format!(
            "a user span is {} ordinary tokens, e.g. `{}`",
            env.layout().user_width,
            example_span(env, vocab)
        )),
    }
}

fn example_span(env: &dyn Environment, vocab: &Vocabulary) -> String {
    let s = DialogueState::initial();
    env.user_outcomes(&s, &env.opening_system())
        .first()
        .map(|(_, span)| vocab.render(span))
        .unwrap_or_default()
}

/// Runs one dialogue on the first configured suite with the first
/// configured planner. Returns the final assessment line, or `None` if the
/// user quit.
pub fn run_session(opts: &Options, input: &mut impl BufRead, output: &mut impl Write) -> Result<Option<String>, CliError> {
    let r = opts.resolve()?;
    let vocab = Vocabulary::standard();
    let suite = &r.suites[0];
    let kind = r.planners[0];
    let model = if r.needs_model() {
        Some(model_for(&r, suite, &opts.out, &vocab)?)
    } else {
        None
    };
    let planner = build_planner(kind, model.as_ref(), &r.config.planner)?;
    let seed = r.episode_seed(0);
    let env = suite.environment(seed, &vocab).map_err(|e| CliError::Runtime(e.to_string()))?;

    writeln!(output, "suite {} ({}), planner {}", suite.id, env.scenario_id(), planner.name())?;
    writeln!(output, "type the user's reply as tokens, `quit` to leave")?;
    let mut state = DialogueState::initial();
    let mut trace = Vec::new();
    loop {
        let system = if state.turn == 0 {
            env.opening_system()
        } else {
            planner
                .act(env.as_ref(), &state, diffplan_core::episode::planner_seed(seed, state.turn), &mut trace)
                .map_err(|e| CliError::Runtime(e.to_string()))?
                .span()
        };
        writeln!(output, "[{}] system: {}", state.turn, vocab.render(&system))?;
        let user = loop {
            write!(output, "[{}] user> ", state.turn)?;
            output.flush()?;
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                return Ok(None);
            }
            match parse_reply(&line, env.as_ref(), state.turn, &vocab) {
                Reply::Span(s) => break s,
                Reply::Retry(msg) => writeln!(output, "{msg}")?,
                Reply::Quit => return Ok(None),
            }
        };
        state = state
            .advance(&system, &user)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let done = state.turn >= env.t_max();
        let a = env.assess(state.prefix.tokens(), done);
        if a.terminal_turn.is_some() {
            let mut msg = format!(
                "{} after {} turns, reward {:.3}",
                if a.success { "success" } else { "failure" },
                state.turn,
                a.reward
            );
            if let Some(p) = a.deal_price {
                msg.push_str(&format!(", deal at {p:.0}"));
            }
            writeln!(output, "{msg}")?;
            return Ok(Some(msg));
        }
    }
}
