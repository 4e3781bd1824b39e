#!/usr/bin/env python3
"""Writes the 30-case offline benchmark fixture set.

Output (relative to the repository root):
  fixtures/bench30/<case_id>.json          case specs
  fixtures/bench30/scripts/<case_id>.json  simulated clinician scripts
  fixtures/grounding/local/<term>.json     key-term passages
  fixtures/grounding/dailymed/<dx>.json    drug passages for some diagnoses

Everything is written from the literal tables below; rerunning the script
reproduces the files byte for byte.
"""

import json
import re
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "fixtures" / "bench30"
GROUNDING = ROOT / "fixtures" / "grounding"
FETCHED_AT = "2024-01-01T00:00:00Z"


def med(brand, generic, dosage, frequency, duration, cautions, side_effects, considerations):
    return {
        "brand_name": brand,
        "generic_name": generic,
        "dosage": dosage,
        "frequency": frequency,
        "duration": duration,
        "cautions": cautions,
        "side_effects": side_effects,
        "patient_considerations": considerations,
    }


def a(diagnosis, confidence):
    return {"diagnosis": diagnosis, "confidence": confidence}


# Each entry: case fields, then the clinician script. Trajectories vary on
# purpose: immediate acceptance, acceptance after one to three exams,
# forced finals at the budget, unavailable exams, wrong first referrals,
# follow-up referrals and outright misdiagnoses.
CASES = [
    # ---------------- Cardiology ----------------
    dict(
        specialty="Cardiology",
        profile="I get a crushing pressure in my chest when I walk uphill. It goes away after a few minutes of rest. "
        "I smoke a pack a day. My father had a heart attack at 55.",
        history="61-year-old man with three months of exertional chest pressure relieved by rest.",
        findings=[("cardiac auscultation", "Regular rhythm, no murmurs."), ("blood pressure", "152/94 mmHg.")],
        tests=[
            ("electrocardiogram", "Sinus rhythm, no acute ST changes."),
            ("exercise stress test", "2 mm horizontal ST depression in V4-V6 at 7 METs with typical chest pain."),
            ("lipid panel", "LDL 4.6 mmol/L, HDL 0.9 mmol/L."),
        ],
        truth="Stable angina pectoris",
        truth_specialty="Cardiology",
        key_terms=["angina"],
        referral="Cardiology",
        assessments=[a("Suspected stable angina", 5), a("Stable angina pectoris", 6), a("Stable angina pectoris", 9)],
        exams=["electrocardiogram", "exercise stress test"],
        meds=[
            med("Nitrostat", "nitroglycerin", "0.4 mg sublingual", "as needed for chest pain", "ongoing",
                ["hypotension", "PDE5 inhibitor use"], ["headache", "dizziness"], "sit down before taking a dose"),
            med("Lipitor", "atorvastatin", "40 mg", "once daily", "long term",
                ["active liver disease"], ["myalgia"], "report unexplained muscle pain"),
        ],
        drug_passage="Nitroglycerin relieves angina by venodilation. Statins such as atorvastatin reduce cardiovascular events in stable coronary disease.",
    ),
    dict(
        specialty="Cardiology",
        profile="My heart has been racing and fluttering on and off for two weeks. I feel light-headed sometimes. "
        "I drink a lot of coffee. I have high blood pressure.",
        history="68-year-old woman with intermittent palpitations and light-headedness.",
        findings=[("pulse examination", "Irregularly irregular pulse at 118 beats per minute.")],
        tests=[
            ("electrocardiogram", "Atrial fibrillation with rapid ventricular response, rate 120."),
            ("echocardiogram", "Left atrial enlargement, ejection fraction 55 percent."),
            ("thyroid function tests", "TSH 1.8 mU/L, normal."),
        ],
        truth="Atrial fibrillation",
        truth_specialty="Cardiology",
        key_terms=["atrial fibrillation"],
        referral="Cardiology",
        assessments=[a("Atrial fibrillation", 6), a("Atrial fibrillation", 9)],
        exams=["electrocardiogram"],
        meds=[
            med("Eliquis", "apixaban", "5 mg", "twice daily", "long term",
                ["active bleeding", "severe hepatic impairment"], ["bleeding", "bruising"], "do not stop abruptly"),
            med("Lopressor", "metoprolol", "25 mg", "twice daily", "long term",
                ["asthma", "bradycardia"], ["fatigue", "dizziness"], "check pulse before each dose"),
        ],
        drug_passage="Apixaban is an oral factor Xa inhibitor used for stroke prevention in non-valvular atrial fibrillation. Beta blockers provide rate control.",
    ),
    dict(
        specialty="Cardiology",
        profile="My ankles have been swelling for a month. I get breathless lying flat and use three pillows. "
        "I wake up at night gasping. I had a heart attack five years ago.",
        history="72-year-old man with progressive dyspnoea, orthopnoea and ankle oedema.",
        findings=[
            ("lung auscultation", "Bibasal fine crackles."),
            ("jugular venous pressure", "Raised at 6 cm above the sternal angle."),
        ],
        tests=[
            ("BNP", "NT-proBNP 3400 pg/mL."),
            ("echocardiogram", "Ejection fraction 30 percent with anterior wall hypokinesis."),
            ("chest x-ray", "Cardiomegaly with upper lobe diversion and small bilateral effusions."),
        ],
        truth="Heart failure with reduced ejection fraction",
        truth_specialty="Cardiology",
        key_terms=["heart failure"],
        referral="Pulmonology",
        follow_up="Cardiology",
        assessments=[a("Congestive heart failure", 5), a("Heart failure with reduced ejection fraction", 7),
                     a("Heart failure with reduced ejection fraction", 9)],
        exams=["chest x-ray", "echocardiogram"],
        meds=[
            med("Lasix", "furosemide", "40 mg", "once daily", "ongoing",
                ["hypokalaemia", "renal impairment"], ["dehydration", "low potassium"], "weigh yourself every morning"),
        ],
        drug_passage=None,
    ),
    dict(
        specialty="Cardiology",
        profile="I have had sharp chest pain for two days that is worse when I lie down and better when I lean forward. "
        "I had a cold last week. The pain gets worse when I breathe in.",
        history="34-year-old man with pleuritic positional chest pain after a viral illness.",
        findings=[("cardiac auscultation", "Pericardial friction rub at the left sternal edge.")],
        tests=[
            ("electrocardiogram", "Diffuse concave ST elevation with PR depression."),
            ("troponin", "High-sensitivity troponin 8 ng/L, normal."),
            ("echocardiogram", "Trace pericardial effusion, normal function."),
        ],
        truth="Acute pericarditis",
        truth_specialty="Cardiology",
        key_terms=["pericarditis"],
        referral="Cardiology",
        assessments=[a("Acute pericarditis", 8)],
        exams=[],
        meds=[
            med("Advil", "ibuprofen", "600 mg", "three times daily", "2 weeks",
                ["peptic ulcer disease", "renal impairment"], ["dyspepsia"], "take with food"),
            med("Colcrys", "colchicine", "0.5 mg", "twice daily", "3 months",
                ["severe renal impairment"], ["diarrhoea"], "stop if severe diarrhoea develops"),
        ],
        drug_passage="Acute pericarditis is treated with high-dose NSAIDs such as ibuprofen together with colchicine to reduce recurrence.",
    ),
    dict(
        specialty="Cardiology",
        profile="I fainted twice this month while climbing stairs. I get chest tightness when I exert myself. "
        "I am 79 and I used to walk every day.",
        history="79-year-old woman with exertional syncope and angina.",
        findings=[("cardiac auscultation", "Harsh ejection systolic murmur radiating to the carotids, soft second heart sound.")],
        tests=[
            ("echocardiogram", "Calcified aortic valve, mean gradient 48 mmHg, valve area 0.8 cm2."),
            ("electrocardiogram", "Left ventricular hypertrophy with strain."),
        ],
        truth="Severe aortic stenosis",
        truth_specialty="Cardiology",
        key_terms=["aortic stenosis"],
        referral="Neurology",
        assessments=[a("Vasovagal syncope", 4), a("Cardiac syncope", 5), a("Hypertrophic cardiomyopathy", 6),
                     a("Hypertrophic cardiomyopathy", 6), a("Hypertrophic cardiomyopathy", 6)],
        exams=["cardiac MRI", "holter monitor", "tilt table test", "electrocardiogram"],
        meds=[],
        drug_passage=None,
    ),
    # ---------------- Pulmonology ----------------
    dict(
        specialty="Pulmonology",
        profile="I have had a cough with yellow phlegm for five days. I get short of breath climbing stairs. "
        "I had a fever last night. I do not smoke.",
        history="54-year-old man with five days of productive cough and fever.",
        findings=[("chest auscultation", "Crackles over the right lower lobe.")],
        tests=[
            ("chest x-ray", "Right lower lobe consolidation."),
            ("complete blood count", "White cell count 14.2 x10^9/L with neutrophilia."),
        ],
        truth="Community-acquired pneumonia",
        truth_specialty="Pulmonology",
        key_terms=["pneumonia"],
        referral="Pulmonology",
        assessments=[a("Lower respiratory tract infection", 5), a("Community-acquired pneumonia", 8)],
        exams=["chest x-ray"],
        meds=[
            med("Biaxin", "clarithromycin", "500 mg", "every 12 hours", "7 days",
                ["QT prolongation"], ["nausea", "abnormal taste"], "finish the full course"),
        ],
        drug_passage="Community-acquired pneumonia in adults is commonly treated with a macrolide such as clarithromycin or with amoxicillin.",
    ),
    dict(
        specialty="Pulmonology",
        profile="I wheeze and cough at night, especially in cold air. My chest feels tight after running. "
        "I had eczema as a child. I use my sister's inhaler sometimes and it helps.",
        history="23-year-old woman with nocturnal cough, wheeze and exercise-induced chest tightness.",
        findings=[("chest auscultation", "Scattered expiratory wheeze.")],
        tests=[
            ("spirometry", "FEV1/FVC 0.68 with 18 percent improvement after bronchodilator."),
            ("peak flow diary", "Diurnal variability of 25 percent."),
        ],
        truth="Asthma",
        truth_specialty="Pulmonology",
        key_terms=["asthma"],
        referral="Pulmonology",
        assessments=[a("Asthma", 7), a("Asthma", 9)],
        exams=["spirometry"],
        meds=[
            med("Ventolin", "salbutamol", "100 micrograms, 2 puffs", "as needed", "ongoing",
                ["tachyarrhythmia"], ["tremor", "palpitations"], "use a spacer"),
            med("Flovent", "fluticasone", "250 micrograms", "twice daily", "ongoing",
                [], ["oral thrush"], "rinse mouth after use"),
        ],
        drug_passage="Asthma is managed with inhaled corticosteroids such as fluticasone and short-acting bronchodilators such as salbutamol.",
    ),
    dict(
        specialty="Pulmonology",
        profile="I have been coughing every morning for years and bringing up white phlegm. "
        "I get breathless walking to the shop. I smoked for forty years.",
        history="66-year-old man, 40 pack-year smoker, with chronic productive cough and exertional dyspnoea.",
        findings=[("chest auscultation", "Reduced breath sounds with prolonged expiration.")],
        tests=[
            ("spirometry", "FEV1/FVC 0.52, FEV1 48 percent predicted, no reversibility."),
            ("chest x-ray", "Hyperinflated lungs with flattened diaphragms."),
            ("arterial blood gas", "pO2 8.6 kPa, pCO2 5.9 kPa."),
        ],
        truth="Chronic obstructive pulmonary disease",
        truth_specialty="Pulmonology",
        key_terms=["copd"],
        referral="Pulmonology",
        assessments=[a("Chronic bronchitis", 5), a("Chronic obstructive pulmonary disease", 7),
                     a("Chronic obstructive pulmonary disease", 8)],
        exams=["chest CT", "spirometry"],
        meds=[
            med("Spiriva", "tiotropium", "18 micrograms", "once daily", "long term",
                ["narrow-angle glaucoma", "urinary retention"], ["dry mouth"], "do not swallow the capsule"),
        ],
        drug_passage=None,
    ),
    dict(
        specialty="Pulmonology",
        profile="I suddenly became short of breath yesterday and have a sharp pain on the right side when I breathe. "
        "I flew back from Australia last week. My left calf has been sore.",
        history="45-year-old woman with acute pleuritic chest pain and dyspnoea after a long-haul flight.",
        findings=[("leg examination", "Swollen tender left calf."), ("pulse oximetry", "Oxygen saturation 91 percent on air.")],
        tests=[
            ("D-dimer", "2.8 mg/L, raised."),
            ("CT pulmonary angiogram", "Filling defects in the right lower lobe segmental arteries."),
        ],
        truth="Pulmonary embolism",
        truth_specialty="Pulmonology",
        key_terms=["pulmonary embolism"],
        referral="Cardiology",
        follow_up="Pulmonology",
        assessments=[a("Suspected pulmonary embolism", 6), a("Suspected pulmonary embolism", 7),
                     a("Pulmonary embolism", 10)],
        exams=["D-dimer", "CT pulmonary angiogram"],
        meds=[
            med("Xarelto", "rivaroxaban", "15 mg", "twice daily", "3 weeks then 20 mg daily",
                ["active bleeding"], ["bleeding"], "take with food"),
        ],
        drug_passage="Rivaroxaban is a direct oral anticoagulant licensed for treatment of pulmonary embolism.",
    ),
    dict(
        specialty="Pulmonology",
        profile="I have had a dry cough and night sweats for two months. I have lost five kilos without trying. "
        "I moved here from abroad last year. Sometimes there is a little blood in my sputum.",
        history="31-year-old man with chronic cough, night sweats, weight loss and haemoptysis.",
        findings=[("chest auscultation", "Crackles at the right apex.")],
        tests=[
            ("chest x-ray", "Right upper lobe cavitating lesion."),
            ("sputum smear", "Acid-fast bacilli seen."),
        ],
        truth="Pulmonary tuberculosis",
        truth_specialty="Infectious Disease",
        key_terms=["tuberculosis"],
        referral="Pulmonology",
        follow_up="Infectious Disease",
        assessments=[a("Lung cancer", 4), a("Pulmonary tuberculosis", 7), a("Pulmonary tuberculosis", 9)],
        exams=["chest x-ray", "sputum smear"],
        meds=[],
        drug_passage=None,
    ),
    # ---------------- Gastroenterology ----------------
    dict(
        specialty="Gastroenterology",
        profile="I have a burning pain in the upper stomach that gets better after I eat. "
        "I take ibuprofen most days for my back. My stools were black this morning.",
        history="58-year-old man with epigastric pain, daily NSAID use and one episode of melaena.",
        findings=[("abdominal examination", "Epigastric tenderness without guarding.")],
        tests=[
            ("upper endoscopy", "Clean-based 1 cm duodenal ulcer."),
            ("helicobacter pylori test", "Urea breath test positive."),
            ("hemoglobin", "Haemoglobin 112 g/L."),
        ],
        truth="Peptic ulcer disease",
        truth_specialty="Gastroenterology",
        key_terms=["peptic ulcer"],
        referral="Gastroenterology",
        assessments=[a("Peptic ulcer disease", 6), a("Peptic ulcer disease", 8)],
        exams=["upper endoscopy"],
        meds=[
            med("Nexium", "esomeprazole", "40 mg", "once daily", "8 weeks",
                ["long-term use and fracture risk"], ["headache"], "take before breakfast"),
        ],
        drug_passage="Peptic ulcers are treated with proton pump inhibitors and eradication of Helicobacter pylori.",
    ),
    dict(
        specialty="Gastroenterology",
        profile="I had sudden severe pain in my upper belly going through to my back after a big night out. "
        "I have been vomiting. I drink most days.",
        history="44-year-old man with acute epigastric pain radiating to the back and vomiting.",
        findings=[("abdominal examination", "Marked epigastric tenderness with guarding.")],
        tests=[
            ("serum lipase", "Lipase 1850 U/L, over three times the upper limit."),
            ("abdominal ultrasound", "No gallstones, oedematous pancreas."),
        ],
        truth="Acute alcoholic pancreatitis",
        truth_specialty="Gastroenterology",
        key_terms=["pancreatitis"],
        referral="General Surgery",
        follow_up="Gastroenterology",
        assessments=[a("Acute pancreatitis", 6), a("Acute alcoholic pancreatitis", 9)],
        exams=["serum lipase"],
        meds=[],
        drug_passage=None,
    ),
    dict(
        specialty="Gastroenterology",
        profile="I have had diarrhoea with blood and mucus for six weeks. I rush to the toilet eight times a day. "
        "My stomach cramps before I go. I have lost weight.",
        history="27-year-old woman with six weeks of bloody diarrhoea and urgency.",
        findings=[("abdominal examination", "Mild left iliac fossa tenderness.")],
        tests=[
            ("colonoscopy", "Continuous mucosal inflammation from rectum to splenic flexure."),
            ("stool culture", "No pathogens isolated."),
            ("faecal calprotectin", "Calprotectin 950 micrograms per gram."),
        ],
        truth="Ulcerative colitis",
        truth_specialty="Gastroenterology",
        key_terms=["ulcerative colitis"],
        referral="Gastroenterology",
        assessments=[a("Infectious colitis", 5), a("Inflammatory bowel disease", 6), a("Ulcerative colitis", 8)],
        exams=["stool culture", "colonoscopy"],
        meds=[
            med("Asacol", "mesalazine", "2.4 g", "once daily", "long term",
                ["renal impairment"], ["headache", "nausea"], "have kidney function checked regularly"),
        ],
        drug_passage="Mild to moderate ulcerative colitis is treated with aminosalicylates such as mesalazine.",
    ),
    dict(
        specialty="Gastroenterology",
        profile="My eyes and skin have turned yellow over the last week. My urine is dark and my stools are pale. "
        "I feel tired and sick. I got back from a trip to India three weeks ago.",
        history="29-year-old man with a week of jaundice after travel.",
        findings=[("abdominal examination", "Tender smooth hepatomegaly.")],
        tests=[
            ("liver function tests", "ALT 2100 U/L, bilirubin 96 micromol/L."),
            ("hepatitis serology", "Hepatitis A IgM positive."),
        ],
        truth="Acute hepatitis A",
        truth_specialty="Gastroenterology",
        key_terms=["hepatitis"],
        referral="Infectious Disease",
        assessments=[a("Viral hepatitis", 5), a("Viral hepatitis", 6), a("Acute hepatitis A", 9)],
        exams=["abdominal ultrasound", "liver function tests", "hepatitis serology"],
        meds=[],
        drug_passage=None,
    ),
    dict(
        specialty="Gastroenterology",
        profile="I have had a dull ache in my right upper belly after fatty meals for months. "
        "Last night it was much worse and lasted hours. I feel feverish.",
        history="48-year-old woman with recurrent postprandial right upper quadrant pain, now prolonged with fever.",
        findings=[("abdominal examination", "Positive Murphy sign.")],
        tests=[
            ("abdominal ultrasound", "Gallstones with a thickened gallbladder wall and pericholecystic fluid."),
            ("complete blood count", "White cell count 13.1 x10^9/L."),
        ],
        truth="Acute cholecystitis",
        truth_specialty="General Surgery",
        key_terms=["cholecystitis"],
        referral="Gastroenterology",
        follow_up="General Surgery",
        assessments=[a("Biliary colic", 5), a("Gastritis", 6), a("Gastritis", 6), a("Gastritis", 6), a("Gastritis", 6)],
        exams=["upper endoscopy", "abdominal ultrasound", "serum amylase", "H. pylori stool antigen"],
        meds=[],
        drug_passage=None,
    ),
    # ---------------- Neurology ----------------
    dict(
        specialty="Neurology",
        profile="I get throbbing headaches on one side that last a day. Light and noise bother me and I feel sick. "
        "I see zigzag lines before they start. My mother has the same headaches.",
        history="26-year-old woman with recurrent unilateral throbbing headaches preceded by visual aura.",
        findings=[("neurological examination", "No focal deficit. Fundi normal.")],
        tests=[("brain MRI", "Normal.")],
        truth="Migraine with aura",
        truth_specialty="Neurology",
        key_terms=["migraine"],
        referral="Neurology",
        assessments=[a("Migraine with aura", 9)],
        exams=[],
        meds=[
            med("Imitrex", "sumatriptan", "50 mg", "at onset, may repeat after 2 hours", "as needed",
                ["coronary artery disease", "uncontrolled hypertension"], ["chest tightness", "tingling"],
                "do not take more than 200 mg a day"),
        ],
        drug_passage="Triptans such as sumatriptan are first-line acute treatment for migraine attacks.",
    ),
    dict(
        specialty="Neurology",
        profile="My right hand has been shaking when it is resting for a year. I feel stiff and slow. "
        "My handwriting has become tiny. My wife says I shuffle when I walk.",
        history="67-year-old man with a resting tremor, bradykinesia and micrographia.",
        findings=[
            ("neurological examination", "Right-sided pill-rolling rest tremor with cogwheel rigidity."),
            ("gait assessment", "Shuffling gait with reduced arm swing."),
        ],
        tests=[("DaTscan", "Reduced striatal dopamine transporter uptake, left more than right.")],
        truth="Parkinson disease",
        truth_specialty="Neurology",
        key_terms=["parkinson"],
        referral="Neurology",
        assessments=[a("Parkinson disease", 7), a("Parkinson disease", 9)],
        exams=["gait assessment"],
        meds=[
            med("Sinemet", "carbidopa-levodopa", "25/100 mg", "three times daily", "long term",
                ["narrow-angle glaucoma"], ["nausea", "dyskinesia"], "avoid taking with high-protein meals"),
        ],
        drug_passage=None,
    ),
    dict(
        specialty="Neurology",
        profile="My left arm and face went weak an hour ago and my speech is slurred. "
        "I have high blood pressure. I take no blood thinners.",
        history="74-year-old man with sudden left-sided weakness and dysarthria, onset one hour ago.",
        findings=[("neurological examination", "Left facial droop, left arm drift, dysarthria. NIHSS 7.")],
        tests=[
            ("head CT", "No haemorrhage."),
            ("CT angiogram", "Right middle cerebral artery M2 occlusion."),
        ],
        truth="Acute ischaemic stroke",
        truth_specialty="Neurology",
        key_terms=["stroke"],
        referral="Emergency Medicine",
        follow_up="Neurology",
        assessments=[a("Acute stroke", 7), a("Acute ischaemic stroke", 9)],
        exams=["head CT"],
        meds=[],
        drug_passage=None,
    ),
    dict(
        specialty="Neurology",
        profile="I had a fit at work yesterday according to my colleagues. I bit my tongue and wet myself. "
        "I was confused for an hour afterwards. I have been sleeping badly.",
        history="22-year-old man with a first witnessed generalised seizure.",
        findings=[("neurological examination", "Normal. Lateral tongue bite.")],
        tests=[
            ("electroencephalogram", "Generalised 3-4 Hz spike and wave discharges."),
            ("brain MRI", "Normal."),
            ("blood glucose", "5.1 mmol/L."),
        ],
        truth="Generalised epilepsy",
        truth_specialty="Neurology",
        key_terms=["epilepsy"],
        referral="Neurology",
        assessments=[a("First unprovoked seizure", 5), a("First unprovoked seizure", 6), a("Generalised epilepsy", 8)],
        exams=["blood glucose", "electroencephalogram"],
        meds=[
            med("Keppra", "levetiracetam", "500 mg", "twice daily", "long term",
                ["renal impairment"], ["irritability", "somnolence"], "do not drive until cleared"),
        ],
        drug_passage="Levetiracetam is a broad-spectrum antiseizure medication used in generalised epilepsy.",
    ),
    dict(
        specialty="Neurology",
        profile="Last year I lost vision in one eye for a few weeks. Now my legs tingle and feel weak. "
        "Hot baths make it worse. I am very tired all the time.",
        history="32-year-old woman with prior optic neuritis now with sensory symptoms and leg weakness.",
        findings=[("neurological examination", "Brisk reflexes, bilateral extensor plantars, reduced vibration sense.")],
        tests=[
            ("brain MRI", "Multiple periventricular and juxtacortical T2 lesions, one enhancing."),
            ("lumbar puncture", "Oligoclonal bands present in CSF only."),
        ],
        truth="Multiple sclerosis",
        truth_specialty="Neurology",
        key_terms=["multiple sclerosis"],
        referral="Ophthalmology",
        assessments=[a("Vitamin B12 deficiency", 4), a("Vitamin B12 deficiency", 5), a("Transverse myelitis", 6),
                     a("Transverse myelitis", 7), a("Transverse myelitis", 7)],
        exams=["vitamin B12 level", "spine MRI", "nerve conduction studies", "visual evoked potentials"],
        meds=[],
        drug_passage=None,
    ),
    # ---------------- Endocrinology ----------------
    dict(
        specialty="Endocrinology",
        profile="I am always thirsty and I get up four times a night to pass urine. I have lost weight. "
        "I feel tired. My father has diabetes.",
        history="49-year-old man with polyuria, polydipsia and weight loss.",
        findings=[("body mass index", "BMI 31 kg/m2.")],
        tests=[
            ("HbA1c", "HbA1c 78 mmol/mol."),
            ("fasting glucose", "Fasting glucose 11.2 mmol/L."),
        ],
        truth="Type 2 diabetes mellitus",
        truth_specialty="Endocrinology",
        key_terms=["diabetes"],
        referral="Endocrinology",
        assessments=[a("Diabetes mellitus", 6), a("Type 2 diabetes mellitus", 9)],
        exams=["HbA1c"],
        meds=[
            med("Glucophage", "metformin", "500 mg", "twice daily with meals", "long term",
                ["eGFR below 30", "iodinated contrast"], ["diarrhoea", "nausea"], "increase the dose slowly"),
        ],
        drug_passage="Metformin is first-line pharmacotherapy for type 2 diabetes mellitus.",
    ),
    dict(
        specialty="Endocrinology",
        profile="I feel hot all the time and my hands shake. I have lost weight even though I eat more. "
        "My heart pounds. My eyes feel gritty and look bigger.",
        history="35-year-old woman with heat intolerance, tremor, weight loss and eye symptoms.",
        findings=[("thyroid examination", "Diffuse smooth goitre with a bruit."), ("eye examination", "Lid retraction and proptosis.")],
        tests=[
            ("thyroid function tests", "TSH below 0.01 mU/L, free T4 48 pmol/L."),
            ("TSH receptor antibodies", "Positive."),
        ],
        truth="Graves disease",
        truth_specialty="Endocrinology",
        key_terms=["hyperthyroidism"],
        referral="Endocrinology",
        assessments=[a("Hyperthyroidism", 6), a("Graves disease", 7), a("Graves disease", 9)],
        exams=["thyroid function tests", "TSH receptor antibodies"],
        meds=[
            med("Tapazole", "carbimazole", "20 mg", "once daily", "12 to 18 months",
                ["pregnancy in the first trimester"], ["rash", "agranulocytosis"], "report sore throat or fever at once"),
            med("Inderal", "propranolol", "40 mg", "three times daily", "until euthyroid",
                ["asthma"], ["fatigue"], "do not stop suddenly"),
        ],
        drug_passage=None,
    ),
    dict(
        specialty="Endocrinology",
        profile="I feel exhausted and cold all the time. I have put on weight and my skin is dry. "
        "I am constipated. My periods have become heavy.",
        history="52-year-old woman with fatigue, cold intolerance, weight gain and menorrhagia.",
        findings=[("reflex examination", "Slow-relaxing ankle reflexes.")],
        tests=[
            ("thyroid function tests", "TSH 38 mU/L, free T4 5 pmol/L."),
            ("thyroid peroxidase antibodies", "Strongly positive."),
        ],
        truth="Hypothyroidism",
        truth_specialty="Endocrinology",
        key_terms=["hypothyroidism"],
        referral="Endocrinology",
        assessments=[a("Hypothyroidism", 8)],
        exams=[],
        meds=[
            med("Synthroid", "levothyroxine", "50 micrograms", "once daily", "long term",
                ["ischaemic heart disease"], ["palpitations if over-replaced"], "take on an empty stomach"),
        ],
        drug_passage="Levothyroxine replacement is the standard treatment for primary hypothyroidism.",
    ),
    dict(
        specialty="Endocrinology",
        profile="I have been vomiting and my stomach hurts. I am very thirsty and breathing fast. "
        "I am 19. I have lost a lot of weight recently.",
        history="19-year-old man with abdominal pain, vomiting, polydipsia and tachypnoea.",
        findings=[("general examination", "Dehydrated, Kussmaul breathing, ketotic breath.")],
        tests=[
            ("blood glucose", "Glucose 29 mmol/L."),
            ("venous blood gas", "pH 7.08, bicarbonate 8 mmol/L."),
            ("blood ketones", "Beta-hydroxybutyrate 6.1 mmol/L."),
        ],
        truth="Diabetic ketoacidosis",
        truth_specialty="Endocrinology",
        key_terms=["ketoacidosis"],
        referral="Gastroenterology",
        follow_up="Endocrinology",
        assessments=[a("Gastroenteritis", 4), a("Diabetic ketoacidosis", 7), a("Diabetic ketoacidosis", 10)],
        exams=["blood glucose", "venous blood gas"],
        meds=[],
        drug_passage=None,
    ),
    dict(
        specialty="Endocrinology",
        profile="I have put on weight around my middle and my face looks round. I bruise easily. "
        "I have purple stretch marks on my belly. My blood pressure is high.",
        history="41-year-old woman with central weight gain, easy bruising and violaceous striae.",
        findings=[("general examination", "Moon face, dorsocervical fat pad, wide purple striae.")],
        tests=[
            ("dexamethasone suppression test", "Cortisol 310 nmol/L after 1 mg overnight dexamethasone."),
            ("ACTH level", "ACTH 75 ng/L."),
            ("pituitary MRI", "7 mm pituitary adenoma."),
        ],
        truth="Cushing disease",
        truth_specialty="Endocrinology",
        key_terms=["cushing"],
        referral="Endocrinology",
        assessments=[a("Metabolic syndrome", 5), a("Metabolic syndrome", 5), a("Obesity", 6), a("Obesity", 6),
                     a("Obesity", 6)],
        exams=["lipid panel", "liver ultrasound", "sleep study", "HbA1c"],
        meds=[],
        drug_passage=None,
    ),
    # ---------------- Infectious Disease ----------------
    dict(
        specialty="Infectious Disease",
        profile="It burns when I pass urine and I go very often. I have a fever and pain in my right side. "
        "I have been shivering.",
        history="33-year-old woman with dysuria, frequency, fever and right flank pain.",
        findings=[("renal angle examination", "Right costovertebral angle tenderness."), ("temperature", "38.9 C.")],
        tests=[
            ("urinalysis", "Nitrites and leucocytes positive."),
            ("urine culture", "Escherichia coli over 10^5 CFU/mL, sensitive to ciprofloxacin."),
        ],
        truth="Acute pyelonephritis",
        truth_specialty="Infectious Disease",
        key_terms=["pyelonephritis"],
        referral="Urology",
        follow_up="Infectious Disease",
        assessments=[a("Urinary tract infection", 6), a("Acute pyelonephritis", 8)],
        exams=["urinalysis"],
        meds=[
            med("Cipro", "ciprofloxacin", "500 mg", "twice daily", "7 days",
                ["tendon disorders", "QT prolongation"], ["nausea", "tendinopathy"], "avoid antacids within 2 hours"),
        ],
        drug_passage="Acute pyelonephritis is treated with ciprofloxacin or another agent guided by urine culture.",
    ),
    dict(
        specialty="Infectious Disease",
        profile="My lower leg has become red, hot and swollen over two days. It is very sore. "
        "I scratched it gardening last week. I feel feverish.",
        history="57-year-old man with a spreading red painful swelling of the left shin.",
        findings=[("skin examination", "Warm, tender, poorly demarcated erythema over the left shin.")],
        tests=[
            ("complete blood count", "White cell count 12.4 x10^9/L."),
            ("C-reactive protein", "CRP 86 mg/L."),
        ],
        truth="Cellulitis",
        truth_specialty="Infectious Disease",
        key_terms=["cellulitis"],
        referral="Dermatology",
        assessments=[a("Cellulitis", 8)],
        exams=[],
        meds=[
            med("Keflex", "cephalexin", "500 mg", "four times daily", "7 days",
                ["penicillin anaphylaxis"], ["diarrhoea"], "mark the edge of the redness"),
        ],
        drug_passage=None,
    ),
    dict(
        specialty="Infectious Disease",
        profile="I have had a high fever every other day since I came back from Nigeria. "
        "I get terrible shaking chills and then sweat. I did not take malaria tablets.",
        history="38-year-old man with cyclical fevers and rigors two weeks after returning from West Africa.",
        findings=[("abdominal examination", "Palpable splenomegaly."), ("temperature", "39.6 C.")],
        tests=[
            ("blood film", "Plasmodium falciparum, parasitaemia 3 percent."),
            ("malaria rapid antigen test", "Positive for P. falciparum HRP2."),
            ("platelet count", "Platelets 88 x10^9/L."),
        ],
        truth="Falciparum malaria",
        truth_specialty="Infectious Disease",
        key_terms=["malaria"],
        referral="Infectious Disease",
        assessments=[a("Malaria", 6), a("Falciparum malaria", 9)],
        exams=["blood film"],
        meds=[
            med("Coartem", "artemether-lumefantrine", "4 tablets", "at 0, 8, 24, 36, 48 and 60 hours", "3 days",
                ["QT prolongation"], ["headache", "dizziness"], "take with fatty food"),
        ],
        drug_passage="Uncomplicated falciparum malaria is treated with artemisinin combination therapy such as artemether-lumefantrine.",
    ),
    dict(
        specialty="Infectious Disease",
        profile="I have a terrible headache and my neck is stiff. Bright light hurts my eyes. "
        "I have a fever and there is a rash on my legs that does not fade.",
        history="19-year-old student with fever, headache, neck stiffness and a non-blanching rash.",
        findings=[("neurological examination", "Neck stiffness, positive Kernig sign."), ("skin examination", "Petechial non-blanching rash on the legs.")],
        tests=[
            ("lumbar puncture", "Turbid CSF, neutrophils 2400 per microlitre, glucose low, Gram-negative diplococci."),
            ("blood culture", "Neisseria meningitidis."),
        ],
        truth="Meningococcal meningitis",
        truth_specialty="Infectious Disease",
        key_terms=["meningitis"],
        referral="Neurology",
        follow_up="Infectious Disease",
        assessments=[a("Bacterial meningitis", 7), a("Meningococcal meningitis", 10)],
        exams=["lumbar puncture"],
        meds=[
            med("Rocephin", "ceftriaxone", "2 g intravenous", "every 12 hours", "7 days",
                ["cephalosporin allergy"], ["diarrhoea"], "close contacts need prophylaxis"),
        ],
        drug_passage=None,
    ),
    dict(
        specialty="Infectious Disease",
        profile="I have had a sore throat, fever and swollen glands for ten days. I am exhausted. "
        "My left upper belly aches. I kissed a new partner recently.",
        history="18-year-old woman with prolonged pharyngitis, fever, lymphadenopathy and fatigue.",
        findings=[("throat examination", "Exudative tonsillitis with palatal petechiae."), ("lymph node examination", "Tender posterior cervical lymphadenopathy.")],
        tests=[
            ("monospot test", "Heterophile antibodies positive."),
            ("blood film", "Atypical lymphocytes 22 percent."),
            ("liver function tests", "ALT 140 U/L."),
        ],
        truth="Infectious mononucleosis",
        truth_specialty="Infectious Disease",
        key_terms=["mononucleosis"],
        referral="Otolaryngology",
        assessments=[a("Streptococcal pharyngitis", 5), a("Streptococcal pharyngitis", 6), a("Tonsillitis", 6),
                     a("Tonsillitis", 7), a("Tonsillitis", 7)],
        exams=["throat swab culture", "rapid strep test", "neck ultrasound", "ASO titre"],
        meds=[],
        drug_passage=None,
    ),
]

QUESTIONS = {
    "Cardiology": ["What brings you in today?", "Does anything bring the symptoms on?", "Any family history of heart disease?"],
    "Pulmonology": ["What brings you in today?", "Are you short of breath?", "Do you smoke?"],
    "Gastroenterology": ["What brings you in today?", "Where is the pain in your belly?", "Any change in your stools?"],
    "Neurology": ["What brings you in today?", "Any weakness or numbness?", "Has anyone in your family had similar problems?"],
    "Endocrinology": ["What brings you in today?", "Any change in your weight?", "Do you feel tired or thirsty?"],
    "Infectious Disease": ["What brings you in today?", "Have you had a fever?", "Have you travelled recently?"],
}


def slug(term):
    return "-".join(re.findall(r"[a-z0-9]+", term.lower()))


def dump(path, value):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(value, indent=2, ensure_ascii=False) + "\n")


def main():
    if len(CASES) != 30:
        sys.exit(f"expected 30 cases, have {len(CASES)}")
    for old in list(OUT.glob("*.json")) + list((OUT / "scripts").glob("*.json")):
        old.unlink()
    counters = {}
    for c in CASES:
        counters[c["specialty"]] = counters.get(c["specialty"], 0) + 1
    for i, c in enumerate(CASES, start=1):
        case_id = f"case-{i:03d}"
        dump(OUT / f"{case_id}.json", {
            "case_id": case_id,
            "specialty": c["specialty"],
            "actor_profile": c["profile"],
            "history": c["history"],
            "physical_findings": [{"name": n, "content": t} for n, t in c["findings"]],
            "test_results": [{"name": n, "content": t} for n, t in c["tests"]],
            "truth_diagnosis": c["truth"],
            "truth_specialty": c["truth_specialty"],
        })
        script = {
            "key_terms": c["key_terms"],
            "specialty": c["referral"],
            "follow_up_specialty": c.get("follow_up"),
            "assessments": c["assessments"],
            "exams": c["exams"],
            "questions": QUESTIONS[c["specialty"]],
            "medications": c["meds"],
        }
        dump(OUT / "scripts" / f"{case_id}.json", script)
        for term in c["key_terms"]:
            path = GROUNDING / "local" / f"{slug(term)}.json"
            if path.exists() and "Typical work-up" not in path.read_text():
                continue  # hand-written passage
            dump(path, {
                "source": "LocalFixture",
                "query": term,
                "title": term.title(),
                "excerpt": f"{c['truth']}: {c['history']} Typical work-up includes "
                + ", ".join(n for n, _ in c["tests"]) + ".",
                "url_or_id": f"fixture:local/{slug(term)}",
                "fetched_at": FETCHED_AT,
            })
        if c["drug_passage"]:
            final = c["assessments"][-1]["diagnosis"]
            dump(GROUNDING / "dailymed" / f"{slug(final)}.json", {
                "source": "DailyMed",
                "query": final,
                "title": f"Prescribing information relevant to {final}",
                "excerpt": c["drug_passage"],
                "url_or_id": f"fixture:dailymed/{slug(final)}",
                "fetched_at": FETCHED_AT,
            })
    print(f"wrote {len(CASES)} cases across {len(counters)} specialties to {OUT.relative_to(ROOT)}")


if __name__ == "__main__":
    main()
