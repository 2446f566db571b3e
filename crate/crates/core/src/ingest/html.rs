use scraper::{Html, Node};

use super::IngestError;

/// Elements whose entire subtree is dropped.
const SKIPPED: &[&str] = &[
    "script", "style", "noscript", "template", "nav", "header", "footer", "head", "iframe", "svg",
];

/// Elements that start and end a line of output.
const BLOCKS: &[&str] = &[
    "address", "article", "aside", "blockquote", "body", "br", "caption", "dd", "details", "dialog",
    "div", "dl", "dt", "fieldset", "figcaption", "figure", "form", "h1", "h2", "h3", "h4", "h5", "h6",
    "hr", "html", "li", "main", "ol", "p", "pre", "section", "summary", "table", "tbody", "td", "tfoot",
    "th", "thead", "tr", "ul",
];

/// Visible text of an HTML document in document order.
///
/// Script, style, navigation, header, footer and comment content is removed.
/// Block elements and literal newlines delimit lines; whitespace runs inside a
/// line collapse to one space and blank lines are dropped. Parsing is
/// tag-soup tolerant.
pub fn extract_web_text(html: &str) -> Result<String, IngestError> {
    let doc = Html::parse_document(html);
    let mut lines = Vec::new();
    let mut current = String::new();
    walk(doc.tree.root(), &mut lines, &mut current);
    flush(&mut lines, &mut current);
    if lines.is_empty() {
        return Err(IngestError::EmptyDocument);
    }
    Ok(lines.join("\n"))
}

fn walk(node: ego_tree::NodeRef<'_, Node>, lines: &mut Vec<String>, current: &mut String) {
    match node.value() {
        Node::Text(t) => {
            let mut parts = t.split('\n');
            if let Some(first) = parts.next() {
                current.push_str(first);
            }
            for part in parts {
                flush(lines, current);
                current.push_str(part);
            }
        }
        Node::Element(el) => {
            let name = el.name();
            if SKIPPED.contains(&name) {
                return;
            }
            let block = BLOCKS.contains(&name);
            if block {
                flush(lines, current);
            }
            for child in node.children() {
                walk(child, lines, current);
            }
            if block {
                flush(lines, current);
            }
        }
        Node::Document | Node::Fragment => {
            for child in node.children() {
                walk(child, lines, current);
            }
        }
        _ => {}
    }
}

fn flush(lines: &mut Vec<String>, current: &mut String) {
    let line = crate::util::collapse_whitespace(current);
    if !line.is_empty() {
        lines.push(line);
    }
    current.clear();
}
