use crate::store::events::{EventPayload, InteractionEvent, StructuralOp};

use super::{Direction, DraftError, EditTarget, SectionId, SectionText};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("event {index} refers to unknown section {section}")]
    UnknownSection { index: usize, section: SectionId },
    #[error("event {index} does not apply: {source}")]
    BadEdit {
        index: usize,
        #[source]
        source: DraftError,
    },
}

/// Rebuilds section headers and bodies from the warm-start draft by applying
/// structural events and body writing actions in log order. Other events are
/// ignored.
pub fn replay_bodies(
    initial: &[SectionText],
    events: &[InteractionEvent],
) -> Result<Vec<SectionText>, ReplayError> {
    let mut sections = initial.to_vec();
    for (index, event) in events.iter().enumerate() {
        let find = |sections: &[SectionText], id: &SectionId| {
            sections
                .iter()
                .position(|s| &s.section_id == id)
                .ok_or_else(|| ReplayError::UnknownSection {
                    index,
                    section: id.clone(),
                })
        };
        match &event.payload {
            EventPayload::Structural { op } => match op {
                StructuralOp::Add {
                    section_id,
                    after,
                    header,
                    ..
                } => {
                    let at = find(&sections, after)? + 1;
                    sections.insert(
                        at,
                        SectionText {
                            section_id: section_id.clone(),
                            header: header.clone(),
                            body: String::new(),
                        },
                    );
                }
                StructuralOp::Move {
                    section_id,
                    direction,
                } => {
                    let i = find(&sections, section_id)?;
                    let j = match direction {
                        Direction::Up => i.checked_sub(1),
                        Direction::Down => (i + 1 < sections.len()).then_some(i + 1),
                    };
                    if let Some(j) = j {
                        sections.swap(i, j);
                    }
                }
                StructuralOp::Delete { section_id } => {
                    let i = find(&sections, section_id)?;
                    sections.remove(i);
                }
            },
            EventPayload::WritingAction {
                section_id,
                target: EditTarget::Body,
                edit,
            } => {
                let i = find(&sections, section_id)?;
                sections[i].body = edit
                    .apply(&sections[i].body)
                    .map_err(|source| ReplayError::BadEdit { index, source })?;
            }
            _ => {}
        }
    }
    Ok(sections)
}
