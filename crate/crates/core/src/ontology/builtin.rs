use super::{parse_ontology, ContextKind, Ontology};

const SITUATIONAL: &str = "\
# situational context
Concept(Context)
Concept(Situation)
Concept(Location)
Concept(Time)
Concept(Activity)
Concept(SpatialThing)
Concept(TemporalThing)
Concept(Event)
Role(hasLocation)
Role(hasTime)
Role(hasActivity)
SubClassOf(Situation Context)
EquivalentTo(Situation And(Some(hasLocation Location) Some(hasTime Time) Some(hasActivity Activity)))
SubClassOf(Location SpatialThing)
SubClassOf(Time TemporalThing)
SubClassOf(Activity Event)
";

const CULTURAL: &str = "\
# cultural context
Concept(Context)
Concept(Culture)
Concept(Region)
Concept(EthnicGroup)
Concept(Religion)
Concept(Value)
Concept(SpatialThing)
Concept(SocialGroup)
Concept(BeliefSystem)
Concept(AbstractConcept)
Role(hasRegion)
Role(hasEthnicGroup)
Role(hasReligion)
Role(hasValue)
SubClassOf(Culture Context)
EquivalentTo(Culture And(Some(hasRegion Region) Some(hasEthnicGroup EthnicGroup) Some(hasReligion Religion) Some(hasValue Value)))
SubClassOf(Region SpatialThing)
SubClassOf(EthnicGroup SocialGroup)
SubClassOf(Religion BeliefSystem)
SubClassOf(Value AbstractConcept)
";

const ETHICAL: &str = "\
# ethical context
Concept(Context)
Concept(EthicalContext)
Concept(EthicalPrinciple)
Concept(Value)
Concept(EthicalNorm)
Concept(AbstractConcept)
Role(hasPrinciple)
Role(hasValue)
Role(hasNorm)
SubClassOf(EthicalContext Context)
EquivalentTo(EthicalContext And(Some(hasPrinciple EthicalPrinciple) Some(hasValue Value) Some(hasNorm EthicalNorm)))
SubClassOf(EthicalPrinciple AbstractConcept)
SubClassOf(Value AbstractConcept)
SubClassOf(EthicalNorm AbstractConcept)
";

/// Source text of a built-in ontology, in the order its axioms are usually written.
pub fn builtin_source(kind: ContextKind) -> &'static str {
    match kind {
        ContextKind::Situational => SITUATIONAL,
        ContextKind::Cultural => CULTURAL,
        ContextKind::Ethical => ETHICAL,
    }
}

pub fn builtin_ontology(kind: ContextKind) -> Ontology {
    parse_ontology(builtin_source(kind)).expect("built-in ontology source is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::{Axiom, ConceptName};

    fn counts(o: &Ontology) -> (usize, usize) {
        let eq = o
            .axioms()
            .iter()
            .filter(|a| matches!(a, Axiom::Equivalence { .. }))
            .count();
        (eq, o.axioms().len() - eq)
    }

    #[test]
    fn axiom_counts_per_kind() {
        assert_eq!(counts(&builtin_ontology(ContextKind::Situational)), (1, 4));
        assert_eq!(counts(&builtin_ontology(ContextKind::Cultural)), (1, 5));
        assert_eq!(counts(&builtin_ontology(ContextKind::Ethical)), (1, 4));
    }

    #[test]
    fn builtin_is_deterministic() {
        for kind in ContextKind::ALL {
            assert_eq!(
                builtin_ontology(kind).to_functional_syntax(),
                builtin_ontology(kind).to_functional_syntax()
            );
        }
    }

    #[test]
    fn top_concepts_are_subsumed_by_context() {
        for kind in ContextKind::ALL {
            let o = builtin_ontology(kind);
            let top = ConceptName::new(kind.top_concept()).unwrap();
            let context = ConceptName::new("Context").unwrap();
            assert!(o.is_subsumed(&top, &context).unwrap());
            assert!(!o.required_roles(&top).unwrap().is_empty());
        }
    }
}
